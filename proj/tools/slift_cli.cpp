#include "slift/cli.hpp"

int main(int argc, char** argv) { return slift::cli::run(argc, argv); }
