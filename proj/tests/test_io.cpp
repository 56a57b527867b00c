#include <nanosim/io.hpp>

#include <gtest/gtest.h>

using namespace nanosim;
namespace io = nanosim::io;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nanosim_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

imaging::ImageStack small_stack() {
  imaging::ImageStack s;
  s.frames = FrameBuffer(3, 4, 5);
  for (std::size_t i = 0; i < s.frames.data().size(); ++i) s.frames.data()[i] = static_cast<double>(i) / 64.0;
  s.optics = optics::OpticsParams::index_matched(1.3, 660.0, 80.0);
  s.fov = imaging::FieldOfView::centered(5, 4, 80.0);
  s.intensity_scale = 0.125;
  return s;
}

}  // namespace

TEST_F(IoTest, ArrayRoundTripIsExact) {
  io::RawArray a;
  a.shape = {2, 3};
  a.data = {0.0f, -1.5f, 3.25f, 1e-30f, 7.0f, std::numeric_limits<float>::max()};
  a.metadata["note"] = "x";
  io::write_array(dir_ / "a", a);
  EXPECT_TRUE(io::exists(dir_ / "a"));
  const auto b = io::read_array(dir_ / "a");
  EXPECT_EQ(b.shape, a.shape);
  EXPECT_EQ(b.data, a.data);
  EXPECT_EQ(b.metadata["note"], "x");
  EXPECT_EQ(b.metadata["format"], io::kFormatName);
  EXPECT_EQ(b.metadata["dtype"], "float32");
  EXPECT_EQ(b.metadata["byte_order"], "little");
  EXPECT_EQ(b.metadata["order"], "C");
}

TEST_F(IoTest, PayloadIsLittleEndianRowMajor) {
  io::RawArray a;
  a.shape = {1, 2};
  a.data = {1.0f, -2.0f};
  io::write_array(dir_ / "le", a);
  const std::string bytes = io::read_text(io::data_path(dir_ / "le"));
  ASSERT_EQ(bytes.size(), 8u);
  const unsigned char expected[] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected[i]) << i;
}

TEST_F(IoTest, ShapeMismatchRejectedOnWrite) {
  io::RawArray a;
  a.shape = {2, 2};
  a.data = {1.0f};
  EXPECT_THROW(io::write_array(dir_ / "bad", a), DimensionError);
}

TEST_F(IoTest, TruncatedPayloadRejected) {
  io::RawArray a;
  a.shape = {4};
  a.data = {1, 2, 3, 4};
  io::write_array(dir_ / "t", a);
  io::write_text_atomic(io::data_path(dir_ / "t"), std::string(12, '\0'));
  EXPECT_THROW(io::read_array(dir_ / "t"), IoError);
}

TEST_F(IoTest, MalformedOrForeignSidecarRejected) {
  io::RawArray a;
  a.shape = {1};
  a.data = {1};
  io::write_array(dir_ / "m", a);
  io::write_text_atomic(io::meta_path(dir_ / "m"), "{ not json");
  EXPECT_THROW(io::read_array(dir_ / "m"), IoError);
  io::write_text_atomic(io::meta_path(dir_ / "m"), R"({"format": "other", "version": 1, "shape": [1]})");
  EXPECT_THROW(io::read_array(dir_ / "m"), IoError);
  io::write_text_atomic(io::meta_path(dir_ / "m"),
                        R"({"format": "nanosim-f32", "version": 1, "dtype": "float64", "byte_order": "little", "shape": [1]})");
  EXPECT_THROW(io::read_array(dir_ / "m"), IoError);
  EXPECT_THROW(io::read_array(dir_ / "missing"), IoError);
}

TEST_F(IoTest, AtomicWriteLeavesNoTemporary) {
  io::write_text_atomic(dir_ / "sub" / "f.txt", "hello");
  EXPECT_EQ(io::read_text(dir_ / "sub" / "f.txt"), "hello");
  io::write_text_atomic(dir_ / "sub" / "f.txt", "again");
  EXPECT_EQ(io::read_text(dir_ / "sub" / "f.txt"), "again");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "sub")) {
    ++files;
    EXPECT_EQ(e.path().extension(), ".txt");
  }
  EXPECT_EQ(files, 1u);
}

TEST_F(IoTest, StackRoundTripKeepsGeometry) {
  const auto s = small_stack();
  io::write_stack(dir_ / "s", s);
  const auto r = io::read_stack(dir_ / "s");
  EXPECT_EQ(r.frames, s.frames);
  EXPECT_EQ(r.optics, s.optics);
  EXPECT_EQ(r.fov, s.fov);
  EXPECT_EQ(r.intensity_scale, s.intensity_scale);
  EXPECT_EQ(io::read_json(io::meta_path(dir_ / "s"))["shape"], (std::vector<std::size_t>{3, 4, 5}));
}

TEST_F(IoTest, SingleImageReadsAsOneFrameStack) {
  Image img(4, 6, 0.5);
  io::write_image(dir_ / "i", img, {{"pixel_size_nm", 65.0}});
  const auto s = io::read_stack(dir_ / "i");
  EXPECT_EQ(s.frame_count(), 1u);
  EXPECT_EQ(s.width(), 6u);
  EXPECT_EQ(s.pixel_size_nm(), 65.0);
  EXPECT_EQ(io::read_image(dir_ / "i"), img);
}

TEST_F(IoTest, FovDisagreeingWithShapeRejected) {
  auto s = small_stack();
  auto arr = io::to_array(s);
  arr.metadata["fov"]["width"] = 9;
  io::write_array(dir_ / "f", arr);
  EXPECT_THROW(io::read_stack(dir_ / "f"), DimensionError);
}

TEST_F(IoTest, NanoscopySidecarRecordsParameters) {
  musical::NanoscopyImage n;
  n.pixels = Image(20, 20, 0.25);
  n.params.optics = optics::OpticsParams::index_matched(1.4, 660.0, 80.0);
  n.params.subpixels = 4;
  n.params.threshold = musical::Threshold::fixed(0.3);
  n.window_size = 7;
  n.source_id = "actin-0001/noisy";
  n.capped_points = 3;
  io::write_nanoscopy(dir_ / "n", n);
  const auto meta = io::read_json(io::meta_path(dir_ / "n"));
  EXPECT_EQ(meta["kind"], "nanoscopy");
  EXPECT_EQ(meta["window_size_used"], 7);
  EXPECT_EQ(meta["source_id"], "actin-0001/noisy");
  EXPECT_EQ(meta["capped_points"], 3);
  EXPECT_EQ(meta["exponent_convention"], "norm_ratio");
  EXPECT_DOUBLE_EQ(meta["pixel_size_nm"].get<double>(), 20.0);
  EXPECT_EQ(meta["musical"]["threshold"], "fixed");
  EXPECT_DOUBLE_EQ(meta["musical"]["threshold_value"].get<double>(), 0.3);
  EXPECT_EQ(io::read_image(dir_ / "n"), n.pixels);
}

TEST(IoJson, OpticsFovAndNoiseRoundTrip) {
  const auto o = optics::OpticsParams::index_matched(1.25, 600.0, 108.0);
  EXPECT_EQ(io::optics_from_json(io::to_json(o)), o);
  const auto f = imaging::FieldOfView::centered(7, 9, 120.0);
  EXPECT_EQ(io::fov_from_json(io::to_json(f)), f);
  noise::NoiseSpec n;
  n.model = noise::NoiseModel::Speckle;
  n.variance = 0.2;
  n.seed = 99;
  const auto back = io::noise_from_json(io::to_json(n));
  EXPECT_EQ(back.model, n.model);
  EXPECT_EQ(back.variance, n.variance);
  EXPECT_EQ(back.seed, n.seed);
}

TEST(IoJson, ThresholdNames) {
  for (auto t : {musical::Threshold::automatic(), musical::Threshold::optimal_hard(), musical::Threshold::fixed(0.7)})
    EXPECT_EQ(io::parse_threshold(io::threshold_name(t), t.value), t);
  EXPECT_THROW(io::parse_threshold("median"), ConfigError);
}
