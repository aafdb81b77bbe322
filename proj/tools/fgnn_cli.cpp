// Batch front end: dataset generation, MAP solving, training, evaluation.
// Exit codes: 0 ok, 2 usage, 3 IO failure, 4 solver precondition violated.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgnn/exactparam.hpp"
#include "fgnn/learn.hpp"
#include "fgnn/maxprod.hpp"
#include "fgnn/oracles.hpp"
#include "fgnn/serialize.hpp"
#include "fgnn/synth.hpp"

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitSolver = 4;

// Runs fn(i) for i in [0, n) on up to `jobs` workers; callers collect results
// by index so output order never depends on scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

struct ManifestBuilder {
  std::string command;
  json flags = json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void write(const std::string& path) const {
    json inputs_j = json::object();
    for (const auto& p : inputs) inputs_j[p] = fgnn::file_digest_hex(p);
    json outputs_j = json::object();
    for (const auto& p : outputs) outputs_j[p] = fgnn::file_digest_hex(p);
    const json m = {{"format", "fgnn-manifest-v1"}, {"tool_version", kToolVersion},
                    {"command", command},           {"flags", flags},
                    {"seeds", seeds},               {"inputs", inputs_j},
                    {"outputs", outputs_j}};
    fgnn::write_text_file(path, m.dump(2) + "\n");
  }
};

struct GenOptions {
  int dataset = 1;
  std::uint64_t seed = 0;
  int n_train = 0, n_val = 0, n_test = 0;
  int length = 30, window = 8, budget_k = 5;
  std::string out;
};

struct SolveOptions {
  std::string method;
  int iters = 4;
  bool cavity = false;
  std::string in, out;
  int jobs = 1;
};

struct TrainOptions {
  std::string data, val, out, log, arch = "desk32";
  fgnn::TrainConfig cfg;
  int jobs = 1;
};

struct EvalOptions {
  std::string params, data, out;
};

json dataset_generator_params(const GenOptions& o, const char* split, int count) {
  return {{"dataset", o.dataset}, {"seed", o.seed},     {"split", split},
          {"count", count},       {"length", o.length}, {"window", o.window},
          {"budget_k", o.budget_k}};
}

int run_gen(const GenOptions& o) {
  const auto splits =
      fgnn::gen_dataset(o.dataset, o.seed, o.n_train, o.n_val, o.n_test, o.length, o.window,
                        o.budget_k);
  ManifestBuilder m;
  m.command = "gen";
  m.flags = {{"dataset", o.dataset}, {"seed", o.seed},   {"train", o.n_train},
             {"val", o.n_val},       {"test", o.n_test}, {"length", o.length},
             {"window", o.window},   {"budget-k", o.budget_k}, {"out", o.out}};
  m.seeds = {o.seed};
  const std::pair<const char*, const std::vector<fgnn::DatasetInstance>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, list] : parts) {
    const std::string path = o.out + "." + name + ".jsonl";
    fgnn::write_dataset_file(path, *list,
                             dataset_generator_params(o, name, static_cast<int>(list->size())));
    m.outputs.push_back(path);
    std::cout << name << ": " << list->size() << " instances -> " << path << "\n";
  }
  m.write(o.out + ".manifest.json");
  return kExitOk;
}

struct SolveStats {
  double sum = 0.0, sumsq = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (sumsq - n * m * m) / (n - 1)));
  }
};

int run_solve(const SolveOptions& o) {
  const auto instances = fgnn::read_dataset_file(o.in);

  struct Row {
    json record;
    double agreement = 0.0;
    bool failed = false;
  };
  std::vector<Row> rows(instances.size());
  bool any_failed = false;

  auto solve_one = [&](int idx) {
    const auto& inst = instances[static_cast<std::size_t>(idx)];
    Row& row = rows[static_cast<std::size_t>(idx)];
    try {
      fgnn::Assignment pred;
      double pred_score = 0.0;
      if (o.method == "brute") {
        auto r = fgnn::brute_force_map(inst.graph);
        pred = r.assignment;
        pred_score = r.score;
      } else if (o.method == "dp") {
        auto r = fgnn::window_dp_map(inst.graph, inst.meta.window);
        pred = r.assignment;
        pred_score = r.score;
      } else if (o.method == "maxprod") {
        pred = fgnn::run_max_product(inst.graph, o.iters, fgnn::BpMode::direct, o.cavity).second;
        pred_score = fgnn::score(inst.graph, pred);
      } else {  // fgnn-exact
        const auto shifted = fgnn::shift_for_decomposition(inst.graph);
        const auto stack = fgnn::build_bp_emulator(shifted.graph, o.iters);
        const auto beliefs = fgnn::emulator_beliefs(stack, shifted.graph);
        fgnn::BeliefState bs;
        bs.node_beliefs = beliefs;
        pred = fgnn::decode(bs);
        pred_score = fgnn::score(inst.graph, pred);
      }
      row.agreement = fgnn::agreement(pred, inst.label);
      row.record = {{"index", idx},
                    {"assignment", pred.states},
                    {"score", pred_score},
                    {"label_score", fgnn::score(inst.graph, inst.label)},
                    {"agreement", row.agreement}};
    } catch (const std::exception& e) {
      row.failed = true;
      row.record = {{"index", idx}, {"error", e.what()}};
    }
  };
  parallel_for(static_cast<int>(instances.size()), o.jobs, solve_one);

  SolveStats stats;
  std::string body;
  for (const auto& row : rows) {
    body += row.record.dump() + "\n";
    if (row.failed)
      any_failed = true;
    else
      stats.add(row.agreement);
  }
  const json summary = {{"summary", true},         {"method", o.method},
                        {"iters", o.iters},        {"instances", instances.size()},
                        {"solved", stats.n},       {"agreement_mean", stats.mean()},
                        {"agreement_std", stats.stddev()}};
  body += summary.dump() + "\n";
  fgnn::write_text_file(o.out, body);

  ManifestBuilder m;
  m.command = "solve";
  m.flags = {{"method", o.method}, {"iters", o.iters}, {"cavity", o.cavity},
             {"in", o.in},         {"out", o.out},     {"jobs", o.jobs}};
  m.inputs = {o.in};
  m.outputs = {o.out};
  m.write(o.out + ".manifest.json");

  std::printf("%s agreement: %.4f +/- %.4f over %d instances\n", o.method.c_str(), stats.mean(),
              stats.stddev(), stats.n);
  return any_failed ? kExitSolver : kExitOk;
}

fgnn::FgnnStack make_arch(const std::string& preset, const fgnn::FeatureSet& sample) {
  int width = 0;
  if (preset == "desk32")
    width = 32;
  else if (preset == "desk48")
    width = 48;
  else if (preset == "desk64")
    width = 64;
  else
    throw CLI::ValidationError("--arch", "unknown preset " + preset);
  return fgnn::make_desk_arch(sample.node.cols, sample.factor.cols, sample.edge.cols, width, 2);
}

int run_train(const TrainOptions& o) {
  const auto train_data = fgnn::read_dataset_file(o.data);
  std::vector<fgnn::DatasetInstance> val_data;
  if (!o.val.empty()) val_data = fgnn::read_dataset_file(o.val);
  if (train_data.empty()) throw std::invalid_argument("training dataset is empty");

  const auto arch = make_arch(o.arch, train_data.front().features);
  const auto result = fgnn::train(train_data, val_data, o.cfg, arch, o.jobs);

  fgnn::write_text_file(o.out, fgnn::stack_to_json(result.stack).dump() + "\n");
  const std::string log_path = o.log.empty() ? o.out + ".log.jsonl" : o.log;
  std::string log_body;
  for (const auto& e : result.log) {
    const json rec = {{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_agreement", e.train_agreement},
                      {"val_agreement", e.val_agreement},
                      {"loss", e.loss}};
    log_body += rec.dump() + "\n";
  }
  fgnn::write_text_file(log_path, log_body);

  ManifestBuilder m;
  m.command = "train";
  m.flags = {{"data", o.data},     {"val", o.val},
             {"epochs", o.cfg.epochs}, {"lr", o.cfg.learning_rate},
             {"decay", o.cfg.decay},   {"batch", o.cfg.batch_size},
             {"seed", o.cfg.seed},     {"arch", o.arch},
             {"out", o.out},           {"log", log_path},
             {"jobs", o.jobs}};
  m.seeds = {o.cfg.seed};
  m.inputs = {o.data};
  if (!o.val.empty()) m.inputs.push_back(o.val);
  m.outputs = {o.out, log_path};
  m.write(o.out + ".manifest.json");

  if (!result.log.empty())
    std::printf("trained %d epochs; final train agreement %.4f, val agreement %.4f\n",
                o.cfg.epochs, result.log.back().train_agreement, result.log.back().val_agreement);
  else
    std::printf("trained 0 epochs; parameters are the seeded initialization\n");
  return kExitOk;
}

int run_eval(const EvalOptions& o) {
  const auto stack = fgnn::stack_from_json(json::parse(fgnn::read_text_file(o.params)));
  const auto data = fgnn::read_dataset_file(o.data);
  SolveStats stats;
  for (const auto& inst : data)
    stats.add(fgnn::agreement(fgnn::predict(stack, inst.graph, inst.features), inst.label));

  if (!o.out.empty()) {
    const json rec = {{"params", o.params},
                      {"data", o.data},
                      {"instances", data.size()},
                      {"agreement_mean", stats.mean()},
                      {"agreement_std", stats.stddev()}};
    fgnn::write_text_file(o.out, rec.dump(2) + "\n");
    ManifestBuilder m;
    m.command = "eval";
    m.flags = {{"params", o.params}, {"data", o.data}, {"out", o.out}};
    m.inputs = {o.params, o.data};
    m.outputs = {o.out};
    m.write(o.out + ".manifest.json");
  }
  std::printf("agreement: %.4f +/- %.4f over %d instances\n", stats.mean(), stats.stddev(),
              stats.n);
  return kExitOk;
}

// Replays a recorded command from its manifest flags.
int run_rerun(const std::string& manifest_path, const std::function<int(std::vector<std::string>)>& dispatch) {
  const json m = json::parse(fgnn::read_text_file(manifest_path));
  if (m.value("format", "") != "fgnn-manifest-v1")
    throw std::runtime_error(manifest_path + " is not an fgnn manifest");
  std::vector<std::string> argv;
  argv.push_back(m.at("command").get<std::string>());
  for (const auto& [key, value] : m.at("flags").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) argv.push_back("--" + key);
      continue;
    }
    if (value.is_string() && value.get<std::string>().empty()) continue;
    argv.push_back("--" + key);
    argv.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  return dispatch(argv);
}

int dispatch(std::vector<std::string> args);

int real_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(std::move(args));
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Factor-graph MAP inference toolkit"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic chain dataset");
  cmd_gen->add_option("--dataset", gen.dataset, "Dataset id")->check(CLI::Range(1, 3));
  cmd_gen->add_option("--seed", gen.seed, "Generator seed");
  cmd_gen->add_option("--train", gen.n_train, "Training instances");
  cmd_gen->add_option("--val", gen.n_val, "Validation instances");
  cmd_gen->add_option("--test", gen.n_test, "Test instances");
  cmd_gen->add_option("--length", gen.length, "Chain length");
  cmd_gen->add_option("--window", gen.window, "Budget factor scope width");
  cmd_gen->add_option("--budget-k", gen.budget_k, "Budget k for datasets 1 and 2");
  cmd_gen->add_option("--out", gen.out, "Output path prefix")->required();

  SolveOptions solve;
  auto* cmd_solve = app.add_subcommand("solve", "Run a MAP method over a dataset");
  cmd_solve->add_option("--method", solve.method, "brute | dp | maxprod | fgnn-exact")
      ->required()
      ->check(CLI::IsMember({"brute", "dp", "maxprod", "fgnn-exact"}));
  cmd_solve->add_option("--iters", solve.iters, "Message passing iterations");
  cmd_solve->add_flag("--cavity", solve.cavity, "Cavity-form updates (maxprod only)");
  cmd_solve->add_option("--in", solve.in, "Input dataset (jsonl)")->required();
  cmd_solve->add_option("--out", solve.out, "Predictions output (jsonl)")->required();
  cmd_solve->add_option("--jobs", solve.jobs, "Worker threads");

  TrainOptions tr;
  auto* cmd_train = app.add_subcommand("train", "Train a model on a dataset");
  cmd_train->add_option("--data", tr.data, "Training dataset")->required();
  cmd_train->add_option("--val", tr.val, "Validation dataset");
  cmd_train->add_option("--epochs", tr.cfg.epochs, "Training epochs");
  cmd_train->add_option("--lr", tr.cfg.learning_rate, "Initial learning rate");
  cmd_train->add_option("--decay", tr.cfg.decay, "Per-epoch learning rate decay");
  cmd_train->add_option("--batch", tr.cfg.batch_size, "Mini-batch size");
  cmd_train->add_option("--seed", tr.cfg.seed, "Init and shuffle seed");
  cmd_train->add_option("--arch", tr.arch, "Architecture preset (desk32/desk48/desk64)");
  cmd_train->add_option("--out", tr.out, "Parameter output path")->required();
  cmd_train->add_option("--log", tr.log, "Training log path (default OUT.log.jsonl)");
  cmd_train->add_option("--jobs", tr.jobs, "Worker threads");

  EvalOptions ev;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate saved parameters on a dataset");
  cmd_eval->add_option("--params", ev.params, "Parameter file")->required();
  cmd_eval->add_option("--data", ev.data, "Dataset to evaluate")->required();
  cmd_eval->add_option("--out", ev.out, "Metrics output path");

  std::string manifest_path;
  auto* cmd_rerun = app.add_subcommand("rerun", "Replay a command from its manifest");
  cmd_rerun->add_option("--manifest", manifest_path, "Manifest file")->required();

  try {
    app.parse(args);  // CLI11 takes the vector reversed internally
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return kExitOk;
    }
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_solve->parsed()) return run_solve(solve);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_eval->parsed()) return run_eval(ev);
    return run_rerun(manifest_path, dispatch);
  } catch (const fgnn::CapacityError& e) {
    std::cerr << "solver precondition: " << e.what() << "\n";
    return kExitSolver;
  } catch (const fgnn::StructureError& e) {
    std::cerr << "solver precondition: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::domain_error& e) {
    std::cerr << "solver precondition: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::out_of_range& e) {
    std::cerr << "solver precondition: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) { return real_main(argc, argv); }
