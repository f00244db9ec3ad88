#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "slift/checkpoint.hpp"
#include "slift/dataset.hpp"
#include "slift/eval.hpp"
#include "slift/tensor_io.hpp"

using namespace slift;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("slift_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t format_offset(const Bytes& b) {
  try {
    decode_tensor(b);
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no FormatError";
  return 0;
}

Checkpoint small_checkpoint() {
  auto spec = sl_unet(2, 1, 2, 4);
  Checkpoint ck;
  ck.arch = spec;
  ck.train.seed = 12;
  ck.stats = select_slices({0.4, 0.1, 0.3, 0.2}, 2);
  ck.epoch = 3;
  ck.rng_digest = 0xfeedbeef;
  ck.net = Network<float>::build(spec, 99);
  return ck;
}

}  // namespace

TEST(TensorIo, RoundTripIsBitExact) {
  Rng rng(1);
  auto f = random_tensor<float>(Dims{3, 16, 64, 64}, rng);
  f[0] = -0.0f;
  auto back = expect_dtype<float>(decode_tensor(encode_tensor(f)), "f32");
  EXPECT_TRUE(bit_identical(f, back));

  auto d = random_tensor<double>(Dims{2, 5}, rng);
  EXPECT_TRUE(bit_identical(d, expect_dtype<double>(decode_tensor(encode_tensor(d)), "f64")));

  Tensor<std::uint8_t> img(Dims{3, 4, 4});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<std::uint8_t>(i * 5);
  EXPECT_EQ(expect_dtype<std::uint8_t>(decode_tensor(encode_tensor(img)), "u8").vec(), img.vec());
}

TEST(TensorIo, HeaderLayout) {
  Tensor<float> t(Dims{2, 3}, 1.0f);
  const auto b = encode_tensor(t);
  ASSERT_EQ(b.size(), 8u + 16 + 24);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SLT1");
  EXPECT_EQ(b[4], 0);
  EXPECT_EQ(b[5], 2);
  EXPECT_EQ(b[8], 2);
  EXPECT_EQ(b[16], 3);
  // 1.0f little-endian: 00 00 80 3f
  EXPECT_EQ(b[24 + 2], 0x80);
  EXPECT_EQ(b[24 + 3], 0x3f);
}

TEST(TensorIo, MalformedInputsReportOffsets) {
  Tensor<float> t(Dims{4, 4}, 2.0f);
  auto good = encode_tensor(t);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, good.size() - 1}) {
    Bytes b(good.begin(), good.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_tensor(b), FormatError) << cut;
  }
  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(format_offset(bad), 0u);
  bad = good;
  bad[4] = 9;
  EXPECT_EQ(format_offset(bad), 4u);
  bad = good;
  bad[7] = 1;
  EXPECT_EQ(format_offset(bad), 6u);
  bad = good;
  bad.push_back(0);
  EXPECT_EQ(format_offset(bad), good.size());
  bad = good;
  for (int i = 0; i < 8; ++i) bad[16 + i] = 0;
  EXPECT_EQ(format_offset(bad), 16u);
  EXPECT_THROW(expect_dtype<double>(decode_tensor(good), "x"), FormatError);
}

TEST(TensorIo, FileWriteIsAtomicAndReadable) {
  auto dir = scratch("file");
  Tensor<double> t(Dims{3}, std::vector<double>{1, 2, 3});
  write_tensor(dir / "a.slt", t);
  EXPECT_FALSE(fs::exists(dir / "a.slt.tmp"));
  EXPECT_EQ(as_dtype<double>(read_tensor(dir / "a.slt")).vec(), t.vec());
  EXPECT_THROW(read_tensor(dir / "missing.slt"), ConfigError);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalForward) {
  auto ck = small_checkpoint();
  const auto bytes = encode_checkpoint(ck);
  auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.arch, ck.arch);
  EXPECT_TRUE(back.train == ck.train);
  EXPECT_EQ(back.stats.selected, ck.stats.selected);
  EXPECT_EQ(back.stats.per_slice_loss, ck.stats.per_slice_loss);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.rng_digest, 0xfeedbeefu);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  Rng rng(2);
  auto image = random_tensor<float>(Dims{3, 8, 8}, rng, 0, 1);
  auto a = predict(ck, image), b = predict(back, image);
  EXPECT_TRUE(bit_identical(a.logits, b.logits));
  EXPECT_TRUE(bit_identical(a.fused, b.fused));
}

TEST(Checkpoint, FileRoundTripAndDigest) {
  auto dir = scratch("ck");
  auto ck = small_checkpoint();
  save_checkpoint(dir / "ck.slck", ck);
  const auto bytes = read_file(dir / "ck.slck");
  EXPECT_EQ(bytes, encode_checkpoint(ck));
  EXPECT_EQ(digest_hex(bytes).size(), 16u);
  EXPECT_EQ(digest_hex({}), "cbf29ce484222325");
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "ck.slck")), bytes);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const auto good = encode_checkpoint(small_checkpoint());
  EXPECT_THROW(decode_checkpoint(Bytes(good.begin(), good.begin() + 6)), FormatError);
  EXPECT_THROW(decode_checkpoint(Bytes(good.begin(), good.end() - 3)), FormatError);
  auto bad = good;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[9] = '!';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  // A tensor of the wrong shape for its slot.
  auto ck = small_checkpoint();
  auto other = ck;
  other.arch = sl_unet(2, 1, 3, 4);
  other.net = Network<float>::build(other.arch, 1);
  auto mixed = encode_checkpoint(other);
  const std::string arch_old = to_json(other.arch).dump(), arch_new = to_json(ck.arch).dump();
  std::string text(mixed.begin(), mixed.end());
  const auto pos = text.find(arch_old);
  ASSERT_NE(pos, std::string::npos);
  ASSERT_EQ(arch_old.size(), arch_new.size());
  text.replace(pos, arch_old.size(), arch_new);
  EXPECT_THROW(decode_checkpoint(Bytes(text.begin(), text.end())), FormatError);
}

TEST(Dataset, WriteReadRoundTripIsExact) {
  auto dir = scratch("seg");
  auto ds = gen_segmentation({7, 4, 16, "mixed"});
  write_dataset(dir, ds);
  auto back = read_dataset(dir);
  ASSERT_EQ(back.samples.size(), 4u);
  EXPECT_EQ(back.generator, ds.generator);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
    EXPECT_TRUE(bit_identical(back.samples[i].image, ds.samples[i].image));
    EXPECT_TRUE(bit_identical(back.samples[i].target, ds.samples[i].target));
  }

  auto ddir = scratch("depth");
  auto dd = gen_depth({8, 3, 16});
  write_dataset(ddir, dd);
  auto dback = read_dataset(ddir);
  EXPECT_EQ(dback.task, Task::depth);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(bit_identical(dback.samples[i].image, dd.samples[i].image));
    EXPECT_TRUE(bit_identical(dback.samples[i].target, dd.samples[i].target));
    EXPECT_TRUE(bit_identical(dback.samples[i].valid, dd.samples[i].valid));
  }
  fs::remove_all(dir);
  fs::remove_all(ddir);
}

TEST(Dataset, RegenerationIsByteIdentical) {
  auto a = scratch("regen_a"), b = scratch("regen_b");
  write_dataset(a, gen_segmentation({7, 10, 16, "mixed"}));
  write_dataset(b, gen_segmentation({7, 10, 16, "mixed"}));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(read_file(e.path()), read_file(b / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 21u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, ValidationRejectsBrokenDirectories) {
  auto dir = scratch("broken");
  EXPECT_THROW(read_dataset(dir), ConfigError);
  write_dataset(dir, gen_segmentation({1, 2, 16, "mixed"}));
  fs::remove(dir / "target_00001.slt");
  EXPECT_THROW(read_dataset(dir), ConfigError);

  // Geometry mixture: overwrite one input with a different size.
  write_dataset(dir, gen_segmentation({1, 2, 16, "mixed"}));
  write_tensor(dir / "input_00001.slt", Tensor<std::uint8_t>(Dims{3, 8, 8}));
  EXPECT_THROW(read_dataset(dir), ConfigError);

  std::ofstream(dir / "manifest.json") << "{not json";
  EXPECT_THROW(read_dataset(dir), ConfigError);
  fs::remove_all(dir);
}
