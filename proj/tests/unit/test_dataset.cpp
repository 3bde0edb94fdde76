#include <gtest/gtest.h>

#include "dualfocus/dataset.hpp"
#include "dualfocus/io.hpp"
#include "support.hpp"

using namespace dualfocus;
using dualfocus::fixtures::TempDir;

TEST(Dataset, BuildWritesSceneFoldersAndReloads) {
  TempDir dir;
  const auto scenes = fixtures::small_dataset(dir.path(), 2, 3, 48);
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(dataset::list_scenes(dir.path()), scenes);
  for (const char* name : {"aif.png", "depth.raw", "w_000.png", "w_002.png", "uw.png", "warp.raw", "occlusion.png",
                           "meta.json"}) {
    EXPECT_TRUE(std::filesystem::exists(scenes[0] / name)) << name;
  }
  EXPECT_FALSE(std::filesystem::exists(scenes[0] / "w_003.png"));

  const auto loaded = dataset::load_dataset(dir.path());
  ASSERT_EQ(loaded.size(), 2u);
  const auto& s = loaded[0];
  EXPECT_EQ(s.slice_count(), 3u);
  EXPECT_EQ(s.width(), 48);
  for (std::size_t i = 1; i < s.slice_count(); ++i) {
    EXPECT_GT(s.lenses[i].focus_distance_mm, s.lenses[i - 1].focus_distance_mm);
  }
}

TEST(Dataset, StoredDefocusEqualsRecomputedMap) {
  TempDir dir;
  fixtures::small_dataset(dir.path(), 1, 3, 40);
  const auto s = dataset::load_dataset(dir.path()).front();
  for (std::size_t i = 0; i < s.slice_count(); ++i) {
    const auto expected = optics::defocus_map(s.rig.w_cam, s.lenses[i], s.depth);
    EXPECT_EQ(s.defocus(i).radius_px, expected.radius_px);
  }
}

TEST(Dataset, DeterministicForSeed) {
  TempDir a, b;
  fixtures::small_dataset(a.path(), 1, 2, 32, 9);
  fixtures::small_dataset(b.path(), 1, 2, 32, 9);
  for (const char* name : {"aif.png", "w_001.png", "uw.png", "warp.raw", "occlusion.png", "meta.json"}) {
    EXPECT_EQ(io::read_file(a / ("scene_000/" + std::string(name))),
              io::read_file(b / ("scene_000/" + std::string(name))))
        << name;
  }
  EXPECT_NE(dataset::scene_seed(9, 0), dataset::scene_seed(9, 1));
}

TEST(Dataset, WarpedUwUsesStoredWarp) {
  TempDir dir;
  fixtures::small_dataset(dir.path(), 1, 2, 40);
  const auto s = dataset::load_dataset(dir.path()).front();
  EXPECT_EQ(s.warped_uw(), align::warp(s.uw_frame, s.warp).image);
}

TEST(Dataset, EmptyDirectoryHasNoScenes) {
  TempDir dir;
  EXPECT_TRUE(dataset::list_scenes(dir.path()).empty());
}
