#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "test_util.hpp"
#include "xview/descriptor.hpp"
#include "xview/feature_store.hpp"
#include "xview/io_util.hpp"

using namespace xview;
using nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), "--threads=2");
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Satellite maps are random; each drone map is its satellite map plus a little
// noise, so aligned retrieval is easy at every alpha.
void write_map_dataset(const std::filesystem::path& dir, int locations) {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::filesystem::create_directories(dir / "t");
  json entries = json::array();
  for (int i = 0; i < locations; ++i) {
    FeatureMap sat = testing::random_map(rng, 8, 6, 6);
    FeatureMap drone = sat;
    for (float& v : drone.data) v = std::max(0.0f, v + static_cast<float>(noise(rng)));
    const std::string loc = "L" + std::to_string(i);
    write_feature_map(sat, dir / "t" / ("s" + std::to_string(i) + ".cvfm"));
    write_feature_map(drone, dir / "t" / ("d" + std::to_string(i) + ".cvfm"));
    entries.push_back({{"image_id", "d" + std::to_string(i)}, {"domain", "drone"}, {"location_id", loc},
                       {"tensor_path", "t/d" + std::to_string(i) + ".cvfm"}});
    entries.push_back({{"image_id", "s" + std::to_string(i)}, {"domain", "satellite"}, {"location_id", loc},
                       {"tensor_path", "t/s" + std::to_string(i) + ".cvfm"}});
  }
  std::ofstream(dir / "manifest.json") << json{{"dataset_name", "maps"}, {"entries", entries}}.dump(1);
}

void synth_pipeline(const testing::TempDir& dir, const std::string& tag) {
  const std::string d = (dir / tag).string();
  REQUIRE(run({"synth", "-", d}).code == 0);
  REQUIRE(run({"align", d + "/drone.jsonl", d + "/satellite.jsonl", "-o", d + "/model.cvam"}).code == 0);
  REQUIRE(run({"search", d + "/model.cvam", d + "/drone.jsonl", d + "/satellite.jsonl", "-o", d + "/res.jsonl"})
              .code == 0);
  REQUIRE(run({"evaluate", d + "/res.jsonl", d + "/manifest.json", "-o", d + "/report.json"}).code == 0);
}

}  // namespace

TEST_CASE("synthetic pipeline end to end") {
  testing::TempDir dir("cli");
  synth_pipeline(dir, "a");
  const json report = json::parse(read_file_text(dir / "a/report.json"));
  CHECK(report["recall"]["1"] == 100.0);
  CHECK(report["ap"] == 100.0);
  CHECK(report["n_queries"] == 100);
  CHECK(report["gallery_size"] == 100);
  CHECK(report["config"].contains("input_hash"));
  CHECK(std::filesystem::exists(dir / "a/report.txt"));

  SUBCASE("reruns are byte identical") {
    synth_pipeline(dir, "b");
    const json other = json::parse(read_file_text(dir / "b/report.json"));
    // Input hashes cover file contents, not paths, so everything matches.
    CHECK(read_file_text(dir / "a/report.json") == read_file_text(dir / "b/report.json"));
    CHECK(read_file_bytes(dir / "a/model.cvam") == read_file_bytes(dir / "b/model.cvam"));
    CHECK(other == report);
  }
  SUBCASE("raw mode without a model and the reverse direction") {
    const std::string d = (dir / "a").string();
    auto r = run({"search", "-", d + "/satellite.jsonl", d + "/drone.jsonl", "--mode", "raw", "--direction",
                  "s2d", "-k", "5", "-o", d + "/raw.jsonl"});
    REQUIRE(r.code == 0);
    const auto lines = read_file_text(dir / "a/raw.jsonl");
    CHECK(lines.find("\"direction\":\"s2d\"") != std::string::npos);
    r = run({"--json", "evaluate", d + "/raw.jsonl", d + "/manifest.json", "-o", d + "/raw_report.json"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["recall"]["1"].get<double>() < 100.0);
  }
  SUBCASE("aggregate over the synthetic manifest reproduces the descriptors up to scale") {
    const std::string d = (dir / "a").string();
    std::ofstream(dir / "avg.toml") << "[pooling]\nkind = \"avg\"\n[aggregation]\nscales = [1]\n";
    auto r = run({"--config", (dir / "avg.toml").string(), "aggregate", d + "/manifest.json", "--domain",
                  "satellite", "-o", d + "/agg.jsonl", "--debug", d + "/trace.jsonl"});
    REQUIRE(r.code == 0);
    const DescriptorSet agg = read_descriptor_set(dir / "a/agg.jsonl");
    const DescriptorSet orig = read_descriptor_set(dir / "a/satellite.jsonl");
    REQUIRE(agg.size() == orig.size());
    double dot = 0.0, n = 0.0;
    for (std::size_t k = 0; k < agg.dim(); ++k) {
      dot += double{agg.items[3].values[k]} * orig.items[3].values[k];
      n += double{orig.items[3].values[k]} * orig.items[3].values[k];
    }
    CHECK(dot / std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::filesystem::exists(dir / "a/trace.jsonl"));
  }
}

TEST_CASE("evaluate rejects an unknown query id with exit code 3") {
  testing::TempDir dir("cli");
  const std::string d = (dir / "s").string();
  REQUIRE(run({"synth", "-", d}).code == 0);
  std::ofstream(dir / "bad.jsonl") << R"({"query_id":"nobody","hits":[{"id":"s00000","score":1.0}]})" << "\n";
  const auto r = run({"evaluate", (dir / "bad.jsonl").string(), d + "/manifest.json", "-o",
                      (dir / "r.json").string()});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error code=3 kind=", 0) == 0);
  CHECK(r.err.find("nobody") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "r.json"));
}

TEST_CASE("argument errors exit with code 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"align", "only_one.jsonl"}).code == 2);
  CHECK(run({"search", "-", "a", "b", "-o", "x", "--direction", "sideways"}).code == 2);
  testing::TempDir dir("cli");
  std::ofstream(dir / "c.toml") << "[pooling]\np = 0.5\n";
  CHECK(run({"--config", (dir / "c.toml").string(), "synth", "-", (dir / "o").string()}).code == 2);
  CHECK(run({"synth", (dir / "missing.toml").string(), (dir / "o").string()}).code == 5);
}

TEST_CASE("sweep-alpha writes one row per alpha") {
  testing::TempDir dir("cli");
  write_map_dataset(dir.path(), 12);
  const std::string out = (dir / "sweep.json").string();
  const auto r = run({"sweep-alpha", (dir / "manifest.json").string(), "--alphas", "1..9", "-o", out});
  REQUIRE(r.code == 0);
  const json doc = json::parse(read_file_text(out));
  REQUIRE(doc["rows"].size() == 9);
  CHECK(doc["rows"][0]["alpha"] == 1.0);
  CHECK(doc["rows"][8]["alpha"] == 9.0);
  for (const auto& row : doc["rows"]) {
    CHECK(row["drone_to_satellite"]["recall"]["1"] == 100.0);
    CHECK(row["satellite_to_drone"]["n_queries"] == 12);
  }
  const std::string table = read_file_text(dir / "sweep.txt");
  CHECK(table.find("Drone -> Satellite (alpha)") != std::string::npos);
  CHECK(table.find("Satellite -> Drone (alpha)") != std::string::npos);
  CHECK(r.out == table);

  CHECK(run({"sweep-alpha", (dir / "manifest.json").string(), "--alphas", "2,4.5", "-o", out}).code == 0);
  CHECK(json::parse(read_file_text(out))["rows"][1]["alpha"] == 4.5);
  CHECK(run({"sweep-alpha", (dir / "manifest.json").string(), "--alphas", "9..1", "-o", out}).code == 2);
}

TEST_CASE("heatmap writes PGM and CSV") {
  testing::TempDir dir("cli");
  const std::string d = (dir / "s").string();
  REQUIRE(run({"synth", "-", d}).code == 0);
  REQUIRE(run({"align", d + "/drone.jsonl", d + "/satellite.jsonl", "-o", d + "/model.cvam"}).code == 0);
  std::mt19937_64 rng(72);
  write_feature_map(testing::random_map(rng, 64, 3, 4), dir / "patches.cvfm");
  const std::string prefix = (dir / "heat").string();
  const auto r = run({"heatmap", d + "/model.cvam", (dir / "patches.cvfm").string(), d + "/satellite.jsonl",
                      "--sat-id", "s00004", "-o", prefix, "--size", "6x8"});
  REQUIRE(r.code == 0);
  const std::string pgm = read_file_text(prefix + ".pgm");
  CHECK(pgm.rfind("P5\n# query patches\n# gallery s00004\n", 0) == 0);
  CHECK(pgm.find("\n8 6\n65535\n") != std::string::npos);
  const std::string csv = read_file_text(prefix + ".csv");
  std::size_t rows = 0;
  std::istringstream lines(csv);
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 6);

  CHECK(run({"heatmap", d + "/model.cvam", (dir / "patches.cvfm").string(), d + "/satellite.jsonl", "-o",
             prefix}).code == 2);  // several satellites and no --sat-id
  CHECK(run({"heatmap", d + "/model.cvam", (dir / "patches.cvfm").string(), d + "/satellite.jsonl",
             "--sat-id", "s00004", "-o", prefix, "--size", "big"}).code == 2);
}
