#pragma once

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "autograd.hpp"
#include "conv.hpp"
#include "ops.hpp"
#include "lifting.hpp"
#include "arch.hpp"
#include "model.hpp"
#include "costmodel.hpp"
#include "losses.hpp"
#include "optim.hpp"
#include "metrics.hpp"
#include "tensor_io.hpp"
#include "synth.hpp"
#include "dataset.hpp"
#include "train.hpp"
#include "eval.hpp"
#include "config.hpp"
#include "checkpoint.hpp"
#include "gradcheck.hpp"
