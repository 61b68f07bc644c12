#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairij/cli.hpp"
#include "fairij/errors.hpp"
#include "fairij/mlp.hpp"
#include "fairij/report_io.hpp"

using namespace fairij;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  fs::path dir = fs::temp_directory_path() /
                 ("fairij_cli_" + tag + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

int call_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned = {"fairij"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& arg : owned) argv.push_back(arg.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_tool(const std::string& args) {
  const std::string command =
      std::string(FAIRIJ_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  return cells;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return nlohmann::json::parse(in);
}

/// Prepares a small synthetic dataset and a trained checkpoint under `dir`.
struct Pipeline {
  fs::path data_dir;
  fs::path model_dir;

  explicit Pipeline(const std::string& tag) {
    data_dir = make_temp_dir(tag + "_data");
    model_dir = make_temp_dir(tag + "_model");
    REQUIRE(call_cli({"prep", "--set", "data.kind=mixture",
                      "--set", "data.n=200", "--set", "data.bias=0.4",
                      "--seed", "5", "--out", data_dir.string()}) == 0);
    REQUIRE(call_cli({"train", "--train", (data_dir / "train.csv").string(),
                      "--val", (data_dir / "val.csv").string(),
                      "--set", "model.hidden=4", "--epochs", "5",
                      "--seed", "5", "--out", model_dir.string()}) == 0);
  }

  std::string train_csv() const { return (data_dir / "train.csv").string(); }
  std::string val_csv() const { return (data_dir / "val.csv").string(); }
  std::string test_csv() const { return (data_dir / "test.csv").string(); }
  std::string model() const { return (model_dir / "model.json").string(); }
};

}  // namespace

TEST_CASE("config text parsing: comments, blanks, duplicates, bad lines") {
  FlatConfig cfg = parse_config_text(
      "# a comment\n"
      "\n"
      "run.seed = 7\n"
      "  data.kind=moons  \n"
      "run.seed=9\n");
  CHECK(cfg.size() == 2);
  CHECK(cfg.at("run.seed") == "9");  // last assignment wins
  CHECK(cfg.at("data.kind") == "moons");

  CHECK_THROWS_AS(parse_config_text("run.seed\n"), InputError);
  CHECK_THROWS_AS(parse_config_text("=5\n"), InputError);
}

TEST_CASE("settings layering: later layers override, unknown keys rejected") {
  std::vector<FlatConfig> layers = {
      {{"run.seed", "3"}, {"data.kind", "moons"}}, {{"run.seed", "11"}}};
  Settings s(layers);
  CHECK(s.seed("run.seed") == 11);
  CHECK(s.str("data.kind") == "moons");
  // Untouched keys fall back to the built-in defaults.
  CHECK(s.integer("run.trials") == 10);
  CHECK(s.real("train.lr") == doctest::Approx(1e-4));
  CHECK(s.flag("data.standardize"));

  std::vector<FlatConfig> typo = {{{"run.sede", "3"}}};
  CHECK_THROWS_AS(Settings{typo}, InputError);
  std::vector<FlatConfig> unknown = {{{"definitely.not.a.key", "1"}}};
  CHECK_THROWS_AS(Settings{unknown}, InputError);
}

TEST_CASE("settings getters validate their values and name the key") {
  std::vector<FlatConfig> layers = {{{"run.trials", "many"},
                                     {"train.lr", "fast"},
                                     {"data.standardize", "perhaps"},
                                     {"mitigate.scale_grid", "1.0,oops"}}};
  Settings s(layers);
  CHECK_THROWS_WITH_AS(s.integer("run.trials"),
                       doctest::Contains("run.trials"), InputError);
  CHECK_THROWS_WITH_AS(s.real("train.lr"), doctest::Contains("train.lr"),
                       InputError);
  CHECK_THROWS_WITH_AS(s.flag("data.standardize"),
                       doctest::Contains("data.standardize"), InputError);
  CHECK_THROWS_AS(s.real_list("mitigate.scale_grid"), InputError);

  std::vector<FlatConfig> list_layers = {
      {{"mitigate.k_grid", "1, 2,5"}, {"data.categorical", "a,b"}}};
  Settings lists(list_layers);
  CHECK(lists.int_list("mitigate.k_grid") == std::vector<int>{1, 2, 5});
  CHECK(lists.str_list("data.categorical") ==
        std::vector<std::string>{"a", "b"});
  CHECK(lists.int_list("data.drop").empty());  // empty default -> empty list
}

TEST_CASE("embedded config echoes drop the output path and job count") {
  std::vector<FlatConfig> layers = {{{"run.seed", "4"},
                                     {"run.out", "/tmp/somewhere"},
                                     {"run.jobs", "8"},
                                     {"data.kind", "mixture"}}};
  Settings s(layers);
  FlatConfig echo = s.embedded();
  CHECK(echo.count("run.out") == 0);
  CHECK(echo.count("run.jobs") == 0);
  CHECK(echo.at("run.seed") == "4");
  CHECK(echo.at("data.kind") == "mixture");
}

TEST_CASE("gen-moons writes a dataset file plus a sidecar report") {
  fs::path dir = make_temp_dir("gen");
  fs::path csv = dir / "m.csv";
  REQUIRE(call_cli({"gen-moons", "--n", "16", "--noise", "0.05",
                    "--seed", "3", "-o", csv.string()}) == 0);

  std::vector<std::string> lines = read_lines(csv);
  REQUIRE(lines.size() == 17);  // header + 16 rows
  CHECK(lines[0].find("label,sensitive") != std::string::npos);

  nlohmann::json report = read_json(dir / "m_report.json");
  CHECK(report.at("config").at("run.seed") == "3");
  CHECK(report.at("config").at("data.n") == "16");
  CHECK(report.at("config").count("run.out") == 0);
}

TEST_CASE("the FAIRIJ_SEED environment only fills a missing file seed") {
  fs::path dir = make_temp_dir("envseed");
  REQUIRE(setenv("FAIRIJ_SEED", "99", 1) == 0);

  REQUIRE(call_cli({"gen-moons", "--n", "10",
                    "-o", (dir / "env.csv").string()}) == 0);
  CHECK(read_json(dir / "env_report.json").at("config").at("run.seed") == "99");

  write_text_file((dir / "seeded.cfg").string(), "run.seed=3\n");
  REQUIRE(call_cli({"gen-moons", "--config", (dir / "seeded.cfg").string(),
                    "--n", "10", "-o", (dir / "cfg.csv").string()}) == 0);
  CHECK(read_json(dir / "cfg_report.json").at("config").at("run.seed") == "3");

  // An explicit flag outranks the environment as well.
  REQUIRE(call_cli({"gen-moons", "--n", "10", "--seed", "12",
                    "-o", (dir / "flag.csv").string()}) == 0);
  CHECK(read_json(dir / "flag_report.json").at("config").at("run.seed") ==
        "12");

  REQUIRE(unsetenv("FAIRIJ_SEED") == 0);
}

TEST_CASE("prep emits three split files that reload consistently") {
  fs::path dir = make_temp_dir("prep");
  REQUIRE(call_cli({"prep", "--set", "data.kind=mixture",
                    "--set", "data.n=100", "--seed", "2",
                    "--out", dir.string()}) == 0);

  // Default split is 0.5/0.2/0.3.
  CHECK(read_lines(dir / "train.csv").size() == 51);
  CHECK(read_lines(dir / "val.csv").size() == 21);
  CHECK(read_lines(dir / "test.csv").size() == 31);

  nlohmann::json report = read_json(dir / "prep_report.json");
  CHECK(report.at("rows").at("train") == 50);
  CHECK(report.at("config").at("data.kind") == "mixture");
}

TEST_CASE("train produces a loadable checkpoint and a report") {
  Pipeline pipe("train");
  Checkpoint checkpoint = load_checkpoint(pipe.model());
  CHECK(checkpoint.created_by == "fairij train");
  CHECK(checkpoint.model.arch.input_dim == 2);
  CHECK(checkpoint.model.arch.hidden_widths == std::vector<int>{4});
  CHECK(checkpoint.model.params.size() ==
        checkpoint.model.arch.param_count());

  nlohmann::json report = read_json(pipe.model_dir / "train_report.json");
  CHECK(report.at("best_epoch").get<int>() >= 1);
  CHECK(report.at("val_accuracy").get<double>() >= 0.0);
  CHECK(report.at("config").at("train.epochs") == "5");
}

TEST_CASE("checkpoints round-trip parameters bitwise") {
  fs::path dir = make_temp_dir("ckpt");
  MlpArchitecture arch;
  arch.input_dim = 3;
  arch.hidden_widths = {2};
  MlpModel model{arch, init_params(arch, 77)};
  model.params[0] = 1.0 / 3.0;  // force a value with no short decimal form

  const std::string path = (dir / "model.json").string();
  save_checkpoint(path, model, 77, "unit test");
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.seed == 77);
  CHECK(loaded.created_by == "unit test");
  CHECK((loaded.model.params.array() == model.params.array()).all());
}

TEST_CASE("influence ranks every training instance") {
  Pipeline pipe("infl");
  fs::path out = make_temp_dir("infl_out");
  REQUIRE(call_cli({"influence", "--model", pipe.model(),
                    "--train", pipe.train_csv(), "--val", pipe.val_csv(),
                    "--method", "exact", "--set", "ihvp.damping=0.5",
                    "--out", out.string()}) == 0);

  std::vector<std::string> rows = read_lines(out / "influence.csv");
  CHECK(rows.size() == 101);  // header + one row per training instance

  std::vector<std::string> sorted = read_lines(out / "influence_sorted.csv");
  REQUIRE(sorted.size() == rows.size());
  std::vector<std::string> header = split_csv_row(sorted[0]);
  const auto score_it = std::find(header.begin(), header.end(), "score");
  REQUIRE(score_it != header.end());
  const std::size_t col =
      static_cast<std::size_t>(score_it - header.begin());
  double previous = std::stod(split_csv_row(sorted[1])[col]);
  for (std::size_t i = 2; i < sorted.size(); ++i) {
    const double score = std::stod(split_csv_row(sorted[i])[col]);
    CHECK(score <= previous);
    previous = score;
  }

  nlohmann::json report = read_json(out / "influence_report.json");
  CHECK(report.at("config").at("ihvp.method") == "exact");
}

TEST_CASE("a diverging solve surfaces as the numerical exit code") {
  Pipeline pipe("diverge");
  fs::path out = make_temp_dir("diverge_out");
  CHECK(call_cli({"influence", "--model", pipe.model(),
                  "--train", pipe.train_csv(), "--val", pipe.val_csv(),
                  "--method", "neumann", "--set", "ihvp.neumann_scale=0.001",
                  "--set", "ihvp.iterations=400",
                  "--out", out.string()}) == 2);
}

TEST_CASE("mitigate writes an edited checkpoint and an honest no-op report") {
  Pipeline pipe("mit");

  fs::path forced = make_temp_dir("mit_noop");
  REQUIRE(call_cli({"mitigate", "--model", pipe.model(),
                    "--train", pipe.train_csv(), "--val", pipe.val_csv(),
                    "--set", "mitigate.k_grid=0",
                    "--set", "ihvp.method=exact", "--set", "ihvp.damping=1.0",
                    "--out", forced.string()}) == 0);
  nlohmann::json noop = read_json(forced / "mitigation_report.json");
  CHECK(noop.at("no_op") == true);
  CHECK(noop.at("chosen_k") == 0);
  Checkpoint untouched = load_checkpoint((forced / "model_fair.json").string());
  Checkpoint original = load_checkpoint(pipe.model());
  CHECK((untouched.model.params.array() ==
         original.model.params.array()).all());

  fs::path out = make_temp_dir("mit_out");
  REQUIRE(call_cli({"mitigate", "--model", pipe.model(),
                    "--train", pipe.train_csv(), "--val", pipe.val_csv(),
                    "--test", pipe.test_csv(),
                    "--set", "ihvp.method=exact", "--set", "ihvp.damping=1.0",
                    "--out", out.string()}) == 0);
  nlohmann::json report = read_json(out / "mitigation_report.json");
  CHECK(report.at("before_val").contains("hard"));
  CHECK(report.at("after_test").contains("accuracy"));
  CHECK(report.at("config").count("run.out") == 0);
  CHECK(fs::exists(out / "model_fair.json"));
  CHECK(fs::exists(out / "influence.csv"));
}

TEST_CASE("eval reports the hard and surrogate metric of a checkpoint") {
  Pipeline pipe("eval");
  fs::path out = make_temp_dir("eval_out");
  REQUIRE(call_cli({"eval", "--model", pipe.model(),
                    "--data", pipe.val_csv(), "--metric", "dp",
                    "--out", out.string()}) == 0);
  nlohmann::json report = read_json(out / "metric_report.json");
  CHECK(report.at("kind") == "dp");
  CHECK(report.at("hard").get<double>() >= 0.0);
  CHECK(report.at("accuracy").get<double>() >= 0.0);
  CHECK(report.at("config").at("metric.kind") == "dp");
}

TEST_CASE("a sweep rerun from its own report reproduces artifacts bitwise") {
  fs::path first = make_temp_dir("sweep_a");
  std::vector<std::string> base = {
      "sweep", "--set", "data.kind=mixture", "--set", "data.n=160",
      "--set", "data.bias=0.4", "--set", "model.hidden=4",
      "--set", "train.epochs=5", "--set", "ihvp.method=exact",
      "--set", "ihvp.damping=1.0", "--set", "mitigate.scale_grid=0.5,1.0",
      "--trials", "2", "--seed", "7"};

  std::vector<std::string> args_a = base;
  args_a.insert(args_a.end(), {"--jobs", "1", "--out", first.string()});
  std::vector<const char*> argv_a = {"fairij"};
  for (const std::string& a : args_a) argv_a.push_back(a.c_str());
  REQUIRE(run_cli(static_cast<int>(argv_a.size()), argv_a.data()) == 0);

  // Rerun purely from the embedded config, with a different output directory
  // and a different level of parallelism.
  fs::path second = make_temp_dir("sweep_b");
  REQUIRE(call_cli({"sweep", "--config",
                    (first / "sweep_report.json").string(),
                    "--jobs", "2", "--out", second.string()}) == 0);

  CHECK(read_text_file((first / "sweep.csv").string()) ==
        read_text_file((second / "sweep.csv").string()));
  CHECK(read_text_file((first / "sweep_report.json").string()) ==
        read_text_file((second / "sweep_report.json").string()));

  nlohmann::json report = read_json(first / "sweep_report.json");
  CHECK(report.at("trials").size() == 2);
  CHECK(report.at("means").contains("test_hard_after"));
}

TEST_CASE("the installed binary maps failures onto stable exit codes") {
  CHECK(run_tool("--help") == 0);
  CHECK(run_tool("not-a-subcommand") == 1);
  CHECK(run_tool("train --definitely-unknown-flag") == 1);
  // Runtime input errors (missing required keys) also land on exit 1.
  CHECK(run_tool("train") == 1);
  CHECK(run_tool("eval --set no.such.key=1") == 1);
}
