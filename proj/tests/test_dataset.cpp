#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <random>

#include "trajdiffuse/dataset.hpp"

namespace td = trajdiffuse;
namespace fs = std::filesystem;

namespace {

class DatasetFiles : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("td_dataset_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void put(const fs::path& rel, const std::string& text) {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel, std::ios::binary) << text;
  }

  std::string message_of(const std::function<void()>& f) {
    try {
      f();
    } catch (const td::FormatError& e) {
      return e.what();
    }
    return "<no error>";
  }

  fs::path dir_;
};

const char* kMapJson = R"({"resolution_m_per_px": 0.5, "origin_x_m": -1.0, "origin_y_m": 2.0})";

}  // namespace

TEST(Pgm, AsciiAndBinaryAgree) {
  const std::string p2 = "P2\n# a comment\n3 2\n255\n255 0 255\n0 255 255\n";
  const auto a = td::parse_pgm(p2);
  EXPECT_EQ(a.rows, 2u);
  EXPECT_EQ(a.cols, 3u);
  EXPECT_EQ(a.cells, (std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1}));
  EXPECT_EQ(td::parse_pgm(td::format_pgm(a)).cells, a.cells);
}

TEST(Pgm, DiagnosticsNameTheOffset) {
  try {
    td::parse_pgm("P2\n2 1\n255\n255 7\n", "m.pgm");
    FAIL();
  } catch (const td::FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("m.pgm"), std::string::npos);
    EXPECT_NE(msg.find("line 4"), std::string::npos);
    EXPECT_NE(msg.find("value 7"), std::string::npos);
  }
  std::string p5 = "P5\n2 2\n255\n";
  p5 += std::string{'\xff', '\0', '\x80', '\xff'};
  try {
    td::parse_pgm(p5, "b.pgm");
    FAIL();
  } catch (const td::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 13"), std::string::npos) << e.what();
  }
  EXPECT_THROW(td::parse_pgm("P5\n2 2\n255\n\xff"), td::FormatError);
  EXPECT_THROW(td::parse_pgm("P5\n1 1\n15\n\x0f"), td::FormatError);
  EXPECT_THROW(td::parse_pgm("P6\n1 1\n255\n\xff"), td::FormatError);
  EXPECT_THROW(td::parse_pgm("P2\n2 1\n255\n255\n"), td::FormatError);
}

TEST_F(DatasetFiles, MapRoundTripKeepsMetadata) {
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> g(12 * 7);
  for (auto& v : g) v = rng() % 3 ? 1 : 0;
  const td::NavEnvironment env(12, 7, g, 0.3, {-2.5, 4.0});
  td::write_map(env, dir_ / "map.pgm");
  EXPECT_EQ(td::read_map(dir_ / "map.pgm"), env);
}

TEST_F(DatasetFiles, MissingSidecarIsAnError) {
  put("map.pgm", "P2\n1 1\n255\n255\n");
  EXPECT_NE(message_of([&] { td::read_map(dir_ / "map.pgm"); }).find("missing map metadata"), std::string::npos);
  put("map.json", R"({"resolution_m_per_px": 0.5})");
  EXPECT_NE(message_of([&] { td::read_map(dir_ / "map.pgm"); }).find("origin_x_m"), std::string::npos);
  put("map.json", R"({"resolution_m_per_px": -1, "origin_x_m": 0, "origin_y_m": 0})");
  EXPECT_THROW(td::read_map(dir_ / "map.pgm"), td::FormatError);
}

TEST_F(DatasetFiles, GeneratedDatasetRoundTripsExactly) {
  td::GenerationConfig cfg;
  cfg.kinds = {td::EnvKind::corridor, td::EnvKind::rooms, td::EnvKind::maze};
  cfg.n_scenes = 3;
  cfg.agents_per_scene = 2;
  cfg.k_intents = 3;
  cfg.seed = 11;
  const auto d = td::generate_dataset(cfg);
  EXPECT_EQ(d.agent_count(), 6u);
  td::write_dataset(d, dir_ / "data");
  const auto back = td::read_dataset(dir_ / "data");
  EXPECT_EQ(back, d);
  EXPECT_EQ(td::generate_dataset(cfg), d);
}

TEST_F(DatasetFiles, HandWrittenFixture) {
  put("dataset.json", R"({"t_obs": 2, "t_pred": 3, "dt": 0.4, "scenes": ["s"]})");
  put("s/map.pgm", "P2\n4 1\n255\n255 255 255 255\n");
  put("s/map.json", kMapJson);
  put("agents.jsonl",
      R"({"scene_id": "s", "agent_id": "a", "frames": [[0,2],[0.5,2],[1,2],[1.5,2],[2,2]], "intents": [{"frames": [3, 4], "values": [[1.5,2],[2,2]]}]})"
      "\n\n"
      R"({"scene_id": "s", "agent_id": "b", "frames": [[2,2],[1.5,2],[1,2],[0.5,2],[0,2]], "intents": [{"frames": [4], "values": [[0,2]]}, {"frames": [4], "values": [[0.5,2]]}]})"
      "\n");
  const auto d = td::read_dataset(dir_);
  ASSERT_EQ(d.scenes.size(), 1u);
  const auto& s = d.scene("s");
  EXPECT_EQ(s.env.origin(), (td::Vec2{-1.0, 2.0}));
  ASSERT_EQ(s.agents.size(), 2u);
  const auto& a = s.agents[0].intents[0];
  EXPECT_EQ(a.frames, (std::vector<std::size_t>{0, 1, 3, 4}));
  EXPECT_EQ(a.n_waypoints, 1u);
  EXPECT_EQ(a.values[1], (td::Vec2{0.5, 2}));
  EXPECT_EQ(s.agents[1].intents.size(), 2u);
  EXPECT_EQ(s.agents[1].intents[1].goal(), (td::Vec2{0.5, 2}));
  EXPECT_THROW(d.scene("nope"), td::Error);
}

TEST_F(DatasetFiles, BadAgentLinesNameTheLine) {
  put("dataset.json", R"({"t_obs": 2, "t_pred": 1, "dt": 0.4, "scenes": ["s"]})");
  put("s/map.pgm", "P2\n1 1\n255\n255\n");
  put("s/map.json", kMapJson);
  const std::string good = R"({"scene_id": "s", "agent_id": "a", "frames": [[0,0],[0,0],[0,0]], "intents": []})";
  put("agents.jsonl", good + "\n" + R"({"scene_id": "s", "agent_id": "b", "frames": [[0,0]], "intents": []})" + "\n");
  const auto msg = message_of([&] { td::read_dataset(dir_); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected 3 frames"), std::string::npos) << msg;

  put("agents.jsonl", good + "\n" + good + "\n{oops\n");
  EXPECT_NE(message_of([&] { td::read_dataset(dir_); }).find("line 3"), std::string::npos);

  put("agents.jsonl", R"({"scene_id": "t", "agent_id": "a", "frames": [[0,0],[0,0],[0,0]], "intents": []})");
  EXPECT_NE(message_of([&] { td::read_dataset(dir_); }).find("unknown scene"), std::string::npos);

  put("agents.jsonl",
      R"({"scene_id": "s", "agent_id": "a", "frames": [[0,0],[0,0],[0,0]], "intents": [{"frames": [1], "values": [[0,0]]}]})");
  EXPECT_THROW(td::read_dataset(dir_), td::FormatError);
}

TEST_F(DatasetFiles, MissingFilesAreReported) {
  EXPECT_NE(message_of([&] { td::read_dataset(dir_); }).find("dataset.json"), std::string::npos);
  put("dataset.json", "{\"t_obs\": 2,");
  EXPECT_THROW(td::read_dataset(dir_), td::FormatError);
}
