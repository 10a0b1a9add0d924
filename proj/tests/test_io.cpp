#include <gtest/gtest.h>

#include "fsd/io.hpp"

using namespace fsd;

namespace {

PointCloud random_cloud(std::uint64_t seed, int n, bool normals) {
  SplitMix64 rng(seed);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.emplace_back(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1) * 1e-7);
    if (normals) c.normals.push_back(Vec3(uniform(rng, -1, 1), 1, 0.3).normalized());
  }
  return c;
}

std::string field_of(auto&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(Ply, SingleCloudRoundTripIsExact) {
  const auto c = random_cloud(1, 50, true);
  const auto back = read_ply(write_ply(c));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].points, c.points);
  EXPECT_EQ(back[0].normals, c.normals);

  const auto plain = random_cloud(2, 5, false);
  const std::string text = write_ply(plain);
  EXPECT_EQ(text.find("nx"), std::string::npos);
  EXPECT_EQ(read_ply(text)[0].points, plain.points);
}

TEST(Ply, MultiObjectSlices) {
  const std::vector<PointCloud> clouds{random_cloud(3, 4, false), random_cloud(4, 0, false),
                                       random_cloud(5, 7, false)};
  const std::string text = write_ply(clouds);
  EXPECT_NE(text.find("comment object_index=1 vertex_count=0"), std::string::npos);
  const auto back = read_ply(text);
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back[i].points, clouds[i].points);
  EXPECT_EQ(read_ply_merged(text).size(), 11u);
}

TEST(Ply, AcceptsForeignHeaders) {
  const std::string text =
      "ply\r\nformat ascii 1.0\r\ncomment made elsewhere\r\nobj_info x\r\nelement vertex 2\r\n"
      "property float x\r\nproperty float y\r\nproperty float z\r\nend_header\r\n"
      "1 2 3\r\n  -0.5\t0 1e-3\r\n";
  const auto c = read_ply_merged(text);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.points[1], Vec3(-0.5, 0, 1e-3));
}

TEST(Ply, ErrorsNameTheField) {
  const std::string head = "ply\nformat ascii 1.0\nelement vertex 1\n";
  const std::string xyz = "property double x\nproperty double y\nproperty double z\n";
  EXPECT_EQ(field_of([] { read_ply("PLY\n"); }), "magic");
  EXPECT_EQ(field_of([] { read_ply("ply\nformat binary_little_endian 1.0\n"); }), "format");
  EXPECT_EQ(field_of([&] { read_ply(head + "property uchar x\nend_header\n1\n"); }), "property");
  EXPECT_EQ(field_of([&] { read_ply(head + "property double x\nend_header\n1\n"); }), "property");
  EXPECT_EQ(field_of([&] { read_ply("ply\nformat ascii 1.0\nelement face 1\n"); }), "element");
  EXPECT_EQ(field_of([&] { read_ply(head + xyz + "end_header\n1 2\n"); }), "vertex");
  EXPECT_EQ(field_of([&] { read_ply(head + xyz + "end_header\n"); }), "vertex");
  EXPECT_EQ(field_of([&] { read_ply(head + xyz); }), "header");
  EXPECT_EQ(field_of([&] { read_ply(head + "bogus\n"); }), "header");
  EXPECT_EQ(field_of([&] {
              read_ply("ply\nformat ascii 1.0\ncomment object_index=0 vertex_count=2\n"
                       "element vertex 1\n" + xyz + "end_header\n1 2 3\n");
            }),
            "comment");
}

TEST(Pgm, DepthRoundTrip) {
  DepthMap d(3, 2, 0.0);
  d.values = {0.0, 0.5, 1.234, 2.0, 65.535, 0.001};
  const auto img = depth_to_pgm(d);
  const auto back = depth_from_pgm(read_pgm(write_pgm(img)));
  ASSERT_EQ(back.width, 3);
  ASSERT_EQ(back.height, 2);
  for (std::size_t i = 0; i < d.values.size(); ++i) EXPECT_NEAR(back.values[i], d.values[i], 1e-12);

  d.values[4] = 30.0;
  const auto coarse = read_pgm(write_pgm(depth_to_pgm(d, 0.5)));
  EXPECT_EQ(coarse.scale_mm_per_unit, 0.5);
  EXPECT_EQ(coarse.values[1], 1000);
  DepthMap far(1, 1, 70.0);
  EXPECT_THROW(depth_to_pgm(far), InvalidArgument);
}

TEST(Pgm, ParsesCommentsAndEightBit) {
  std::string data = "P5\n# a comment\n2 # inline\n1\n255\n";
  data.push_back(char(7));
  data.push_back(char(0));
  const auto img = read_pgm(data);
  EXPECT_EQ(img.values, (std::vector<std::uint16_t>{7, 0}));
  const auto m = mask_from_pgm(img);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(1, 0), 0);
  std::string wide = "P5 1 1 65535\n";
  wide.push_back(char(0x12));
  wide.push_back(char(0x34));
  EXPECT_EQ(read_pgm(wide).values[0], 0x1234);
}

TEST(Pgm, Errors) {
  EXPECT_EQ(field_of([] { read_pgm("P2\n1 1\n255\n0"); }), "magic");
  EXPECT_EQ(field_of([] { read_pgm("P5\nx 1\n255\n0"); }), "width");
  EXPECT_EQ(field_of([] { read_pgm("P5\n1 1\n70000\n0"); }), "maxval");
  EXPECT_EQ(field_of([] { read_pgm("P5\n2 2\n65535\n\1\2"); }), "raster");
  EXPECT_EQ(field_of([] { read_pgm("P5\n# scale_mm_per_unit=-1\n1 1\n255\n\1"); }),
            "scale_mm_per_unit");
}

TEST(Json, SmallDocuments) {
  const auto k = intrinsics_from_json(parse_json(R"({"fx": 500, "fy": 510, "cx": 320, "cy": 240})", "k"));
  EXPECT_EQ(k.fy, 510.0);
  EXPECT_EQ(field_of([] { intrinsics_from_json(parse_json(R"({"fx": 1, "fy": 1, "cx": 0})", "k")); }),
            "cy");
  EXPECT_EQ(field_of([] { parse_json("{", "intrinsics"); }), "intrinsics");

  const LatentCode z(std::vector<double>{0.25, -1.5, 3});
  EXPECT_EQ(latent_from_json(parse_json(latent_to_json(z).dump(), "z")), z);
  EXPECT_EQ(latent_from_json(parse_json("[0.25, -1.5, 3]", "z")), z);
  EXPECT_EQ(field_of([] { latent_from_json(parse_json(R"({"latent": [1, "a"]})", "z")); }), "latent");
  EXPECT_EQ(field_of([] { latent_from_json(parse_json("3", "z")); }), "latent");
}

TEST(Json, RecordLinesReportLineNumbers) {
  const std::string good = R"({"category": "a", "score": 0.5, "transform": {"translation": [1, 2, 3]}})";
  const auto recs = read_records_jsonl(good + "\n" + good);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].transform.translation, Vec3(1, 2, 3));
  EXPECT_EQ(recs[1].box.half_extents, Vec3::Ones());
  EXPECT_EQ(field_of([&] { read_records_jsonl(good + "\n\n[1]\n"); }).rfind("line 3", 0), 0u);
  EXPECT_EQ(field_of([&] {
              read_records_jsonl(R"({"category": "a", "transform": {"rotation": [[1, 0]]}})");
            }),
            "line 1 rotation");
}
