#include "morphofuse/volume_io.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace morphofuse;

namespace {

std::string mvol(const std::string& header, const std::string& payload) { return header + payload; }

std::string f32_payload(const std::vector<float>& v) {
  std::string s;
  for (float x : v) detail::store_le(s, x);
  return s;
}

}  // namespace

TEST(Mvol, TwoByTwoByTwoReadBack) {
  const auto dir = oracle::temp_dir("mvol_basic");
  std::vector<float> v = {0, 1, 2, 3, 4, 5, 6, 7};
  detail::write_file(dir / "a.mvol", mvol("MVOL1\ndims 2 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f32\n"
                                          "endian little\nend\n",
                                          f32_payload(v)));
  const auto g = load_volume(dir / "a.mvol");
  EXPECT_EQ(g.dims(), (Index3{2, 2, 2}));
  EXPECT_EQ(g.intensities(), (std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_FALSE(g.has_labels());
}

TEST(Mvol, PayloadShorterThanHeader) {
  const auto dir = oracle::temp_dir("mvol_short");
  detail::write_file(dir / "a.mvol", mvol("MVOL1\ndims 4 4 4\nspacing 1 1 1\norigin 0 0 0\ndtype f32\nend\n",
                                          f32_payload(std::vector<float>(60, 1.0f))));
  try {
    load_volume(dir / "a.mvol");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::size_mismatch);
    EXPECT_NE(std::string(e.what()).find("60"), std::string::npos);
  }
}

TEST(Mvol, RejectsBadHeaders) {
  const auto dir = oracle::temp_dir("mvol_bad");
  const std::string ok_payload = f32_payload(std::vector<float>(8));
  for (const std::string h : {"MVOL2\ndims 2 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f32\nend\n",
                              "MVOL1\ndims 2 2 2\nspacing 1 0 1\norigin 0 0 0\ndtype f32\nend\n",
                              "MVOL1\ndims 2 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f64\nend\n",
                              "MVOL1\ndims 2 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f32\nendian big\nend\n",
                              "MVOL1\ndims 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f32\nend\n"}) {
    detail::write_file(dir / "a.mvol", h + ok_payload);
    EXPECT_THROW(load_volume(dir / "a.mvol"), Error) << h;
  }
}

TEST(Mvol, HounsfieldPreserved) {
  const auto dir = oracle::temp_dir("mvol_hu");
  GridGeometry g{{3, 1, 1}, Vec3(0.5, 0.5, 2.0), Vec3(-10, 5, 3)};
  const VoxelGrid grid(g, {-1000.0, 40.0, 3000.0}, std::vector<std::int32_t>{0, 2, 2});
  save_mvol(dir / "ct.mvol", grid, VoxelType::i16);
  const auto back = load_volume(dir / "ct.mvol");
  EXPECT_EQ(back.intensities(), grid.intensities());
  EXPECT_EQ(back.labels(), grid.labels());
  EXPECT_EQ(back.geometry(), g);
}

TEST(Mvol, F32RoundTripWithLabels) {
  const auto dir = oracle::temp_dir("mvol_rt");
  std::mt19937_64 rng(1);
  GridGeometry g{{4, 3, 2}, Vec3(0.25, 0.5, 1.5), Vec3(1.5, -2.25, 0.125)};
  std::vector<double> v(g.voxel_count());
  std::vector<std::int32_t> l(g.voxel_count());
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] = static_cast<float>(oracle::uniform(rng, -5, 5));
    l[k] = static_cast<std::int32_t>(rng() % 3);
  }
  save_mvol(dir / "x.mvol", VoxelGrid(g, v, l));
  const auto back = load_volume(dir / "x.mvol");
  EXPECT_EQ(back.intensities(), v);
  EXPECT_EQ(back.labels(), l);
}

TEST(Nifti, RoundTripAxisAligned) {
  const auto dir = oracle::temp_dir("nifti_rt");
  GridGeometry g{{3, 2, 2}, Vec3(0.75, 0.75, 2.5), Vec3(-20, 10, 4)};
  std::vector<double> v(g.voxel_count());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k) * 10.0 - 50.0;
  save_nifti(dir / "v.nii", VoxelGrid(g, v), VoxelType::i16);
  const auto back = load_volume(dir / "v.nii");
  EXPECT_EQ(back.geometry(), g);
  EXPECT_EQ(back.intensities(), v);
}

TEST(Nifti, ScaleSlopeApplied) {
  const auto dir = oracle::temp_dir("nifti_scl");
  GridGeometry g{{2, 1, 1}, Vec3::Ones(), Vec3::Zero()};
  save_nifti(dir / "v.nii", VoxelGrid(g, {1.0, 2.0}), VoxelType::i16);
  auto bytes = detail::read_file(dir / "v.nii");
  const float slope = 2.0f, inter = -1000.0f;
  std::memcpy(bytes.data() + detail::nii::kSclSlope, &slope, 4);
  std::memcpy(bytes.data() + detail::nii::kSclInter, &inter, 4);
  detail::write_file(dir / "v.nii", bytes);
  EXPECT_EQ(load_volume(dir / "v.nii").intensities(), (std::vector<double>{-998.0, -996.0}));
}

TEST(Nifti, ObliqueAffineRejected) {
  const auto dir = oracle::temp_dir("nifti_oblique");
  GridGeometry g{{2, 2, 2}, Vec3::Ones(), Vec3::Zero()};
  save_nifti(dir / "v.nii", VoxelGrid(g, std::vector<double>(8, 1.0)));
  auto bytes = detail::read_file(dir / "v.nii");
  const float shear = 0.3f;
  std::memcpy(bytes.data() + detail::nii::kSrow + 4, &shear, 4);  // srow_x[1]
  detail::write_file(dir / "v.nii", bytes);
  try {
    load_volume(dir / "v.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported);
  }
}

TEST(Nifti, BadMagicRejected) {
  const auto dir = oracle::temp_dir("nifti_magic");
  GridGeometry g{{2, 1, 1}, Vec3::Ones(), Vec3::Zero()};
  save_nifti(dir / "v.nii", VoxelGrid(g, {1.0, 2.0}));
  auto bytes = detail::read_file(dir / "v.nii");
  bytes[detail::nii::kMagic + 1] = 'i';
  detail::write_file(dir / "v.nii", bytes);
  EXPECT_THROW(load_volume(dir / "v.nii"), Error);
}

TEST(LabelLegend, RoundTrip) {
  const auto dir = oracle::temp_dir("legend");
  const LabelLegend legend = {{1, "scaphoid"}, {2, "lunate"}, {25, "L6"}};
  save_label_legend(dir / "legend.json", legend);
  EXPECT_EQ(load_label_legend(dir / "legend.json"), legend);
}
