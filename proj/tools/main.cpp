// Command line driver: generates datasets, computes reduced bases, trains
// and evaluates models, and runs parameter sweeps that emit tidy CSV.
//
// Exit codes are a stable contract for harnesses:
//   0 success
//   2 usage errors (bad flags, unknown tags, exhausted budgets)
//   3 data, shape, configuration and archive errors
//   4 numerical failures (non-finite losses, failed solves)
//   1 anything unexpected

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rbrn/errors.hpp"
#include "rbrn/measures.hpp"
#include "rbrn/metrics.hpp"
#include "rbrn/persistence.hpp"
#include "rbrn/problems.hpp"
#include "rbrn/reduced_basis.hpp"
#include "rbrn/resnet.hpp"
#include "rbrn/rng.hpp"
#include "rbrn/training.hpp"

namespace {

using namespace rbrn;

// Every sweep cell evaluates against the same fixed test draw; only the
// training data varies with the cell seed.
constexpr std::uint64_t kTestSeed = 0x54455354;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

// --------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string problem;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool with_jacobians = false;
  Eigen::Index csv_inputs = 0;
  Eigen::Index csv_outputs = 0;
  bool csv_header = false;
};

int cmd_generate(const GenerateOptions& o) {
  SampleSet data;
  if (o.problem.rfind("csv:", 0) == 0) {
    if (o.with_jacobians)
      throw UsageError("csv datasets carry no jacobians");
    if (o.csv_inputs < 1 || o.csv_outputs < 1)
      throw UsageError(
          "csv problems need positive --csv-inputs and --csv-outputs");
    data = import_csv(o.problem.substr(4), o.csv_inputs, o.csv_outputs,
                      o.csv_header);
    if (o.n > 0) {
      if (o.n > data.size())
        throw UsageError("--n exceeds the csv row count");
      data.inputs = data.inputs.topRows(o.n).eval();
      data.outputs = data.outputs.topRows(o.n).eval();
    }
  } else {
    if (o.n < 1) throw UsageError("--n must be positive");
    ParametricProblem problem = make_problem(o.problem);
    data = problem.sample_batch(o.n, o.seed, o.with_jacobians);
  }
  save_sample_set(data, o.out);
  std::printf("wrote %s: N=%td d_M=%td d_Q=%td jacobians=%s\n", o.out.c_str(),
              data.size(), data.input_dim(), data.output_dim(),
              data.has_jacobians() ? "yes" : "no");
  return 0;
}

// --------------------------------------------------------------------------
// basis

struct BasisOptions {
  std::string data;
  std::string kind = "pod";
  Eigen::Index rank = 0;
  std::string out;
};

// Covariance for active subspaces on data without a registered measure.
Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& inputs) {
  if (inputs.rows() < 2)
    throw DegenerateSample(
        "need at least two samples for an empirical covariance");
  Eigen::MatrixXd centered = inputs.rowwise() - inputs.colwise().mean();
  return centered.transpose() * centered /
         static_cast<double>(inputs.rows() - 1);
}

int cmd_basis(const BasisOptions& o) {
  if (o.rank < 1) throw UsageError("--rank must be at least 1");
  const BasisKind kind = parse_basis_kind(o.kind);
  SampleSet data = load_sample_set(o.data);

  // Registered problems contribute their analytic input measure; anything
  // else (csv imports, foreign archives) falls back to empirical estimates.
  std::optional<ParametricProblem> registered;
  try {
    registered = make_problem(data.problem_tag);
  } catch (const UsageError&) {
  }

  ReducedBasis basis;
  switch (kind) {
    case BasisKind::Pod:
      basis = compute_pod(data.outputs, o.rank);
      break;
    case BasisKind::Kle:
      basis = registered ? compute_kle(registered->measure, o.rank)
                         : compute_kle(data.inputs, o.rank);
      break;
    case BasisKind::ActiveSubspace:
      if (!data.has_jacobians())
        throw MissingJacobians(
            "active subspaces need jacobian samples; regenerate the dataset "
            "with --with-jacobians");
      basis = compute_as(data.jacobians,
                         registered ? registered->measure.realize_covariance()
                                    : empirical_covariance(data.inputs),
                         o.rank);
      break;
  }

  // Write the artifact before the (possibly long) spectrum table so a
  // closed output pipe cannot cost the file.
  save_basis(basis, o.out);

  // Spectrum with the trailing sums that enter the truncation bounds.
  const Eigen::VectorXd& ev = basis.eigenvalues;
  std::vector<double> tail(static_cast<std::size_t>(ev.size()) + 1, 0.0);
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i)
    tail[static_cast<std::size_t>(i)] =
        tail[static_cast<std::size_t>(i) + 1] + ev[i];
  std::printf("# idx  eigenvalue         tail_sum_from_idx\n");
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    std::printf("%5td  %.10e  %.10e\n", i + 1, ev[i],
                tail[static_cast<std::size_t>(i)]);

  std::printf("wrote %s: kind=%s dim=%td rank=%td\n", o.out.c_str(),
              to_string(basis.kind).c_str(), basis.dim(), basis.rank());
  return 0;
}

// --------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data;
  std::string input_basis;  // empty: learn the prolongation
  std::string output_basis;
  std::string mode = "adaptive-all";
  Eigen::Index max_depth = 10;
  Eigen::Index k = 4;
  Eigen::Index epochs = 50;
  Eigen::Index stage_epochs = 0;
  Eigen::Index patience = 2;
  Eigen::Index batch = 2;
  double alpha = 1e-3;
  double overfit_gap = 0.05;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;  // empty: <out>.report.jsonl
};

int cmd_train(const TrainOptions& o) {
  SampleSet data = load_sample_set(o.data);
  ReducedBasis output_basis = load_basis(o.output_basis);
  std::optional<Eigen::MatrixXd> input_vectors;
  if (!o.input_basis.empty())
    input_vectors = load_basis(o.input_basis).vectors;

  TrainConfig cfg;
  cfg.mode = parse_train_mode(o.mode);
  cfg.max_depth = o.max_depth;
  cfg.layer_rank = o.k;
  cfg.total_epochs = o.epochs;
  cfg.stage_epochs = o.stage_epochs;
  cfg.patience = o.patience;
  cfg.batch_size = o.batch;
  cfg.alpha = o.alpha;
  cfg.overfit_gap = o.overfit_gap;
  cfg.val_fraction = o.val_fraction;
  cfg.seed = o.seed;

  TrainOutcome outcome = run_training(data, input_vectors,
                                      output_basis.vectors, cfg);
  save_model(outcome.model, o.out);
  const std::string report_path =
      o.report.empty() ? o.out + ".report.jsonl" : o.report;
  save_report(outcome.report, report_path);

  std::printf("final_accuracy %s\n",
              format_double(outcome.report.final_accuracy).c_str());
  std::printf("stopping_reason %s\n",
              to_string(outcome.report.stopping_reason).c_str());
  std::printf("depth %td\n", outcome.model.depth());
  std::printf("epochs_consumed %td\n", outcome.report.epochs_consumed);
  std::printf("wrote %s\nwrote %s\n", o.out.c_str(), report_path.c_str());
  return 0;
}

// --------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string model;
  std::string data;
};

int cmd_eval(const EvalOptions& o) {
  ResNetModel model = load_model(o.model);
  SampleSet data = load_sample_set(o.data);
  EvalResult result = l2nu_accuracy(model, data.inputs, data.outputs);
  std::printf("accuracy %s\n", format_double(result.l2nu_accuracy).c_str());
  std::printf("n_test %td\n", result.n_test);
  std::printf("n_skipped %td\n", result.n_skipped);
  return 0;
}

// --------------------------------------------------------------------------
// sweep

struct SweepOptions {
  std::string spec_path;
  bool no_timing = false;
};

struct SweepSpec {
  std::vector<std::string> problems;
  std::vector<Eigen::Index> n_train;
  std::vector<Eigen::Index> rank;
  std::vector<Eigen::Index> depth;
  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  Eigen::Index n_test = 256;
  std::string input_basis = "as";  // "as", "kle" or "none"
  Eigen::Index epochs = 50;
  Eigen::Index k = 4;
  Eigen::Index batch = 2;
};

struct SweepCell {
  std::string problem;
  Eigen::Index n_train = 0;
  Eigen::Index rank = 0;
  Eigen::Index depth = 0;
  std::string mode;
  std::uint64_t seed = 0;
};

struct CellResult {
  bool ok = false;
  double accuracy = 0.0;
  double gap = 0.0;
  Eigen::Index depth_final = 0;
  long long wall_ms = 0;
  std::string status;
  int exit_class = 0;  // 0 ok, 3 data error, 4 numerical error
};

// Readable class label for per-cell status reporting.
std::string error_label(const Error& e) {
  if (dynamic_cast<const NonFiniteLoss*>(&e)) return "NonFiniteLoss";
  if (dynamic_cast<const SolveFailure*>(&e)) return "SolveFailure";
  if (dynamic_cast<const RankError*>(&e)) return "RankError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const EmptySample*>(&e)) return "EmptySample";
  if (dynamic_cast<const DegenerateSample*>(&e)) return "DegenerateSample";
  if (dynamic_cast<const MissingJacobians*>(&e)) return "MissingJacobians";
  if (dynamic_cast<const MissingLipschitz*>(&e)) return "MissingLipschitz";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const UsageError*>(&e)) return "UsageError";
  if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
  if (dynamic_cast<const InvalidCovariance*>(&e)) return "InvalidCovariance";
  if (dynamic_cast<const NotSymmetric*>(&e)) return "NotSymmetric";
  if (dynamic_cast<const NotSPD*>(&e)) return "NotSPD";
  if (dynamic_cast<const SolveFailure*>(&e)) return "SolveFailure";
  if (dynamic_cast<const NotAnArchive*>(&e)) return "NotAnArchive";
  if (dynamic_cast<const CorruptArchive*>(&e)) return "CorruptArchive";
  if (dynamic_cast<const UnsupportedVersion*>(&e)) return "UnsupportedVersion";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const BudgetExceeded*>(&e)) return "BudgetExceeded";
  return "Error";
}

CellResult run_cell(const SweepCell& cell, const SweepSpec& spec) {
  CellResult result;
  const auto start = std::chrono::steady_clock::now();
  try {
    ParametricProblem problem = make_problem(cell.problem);
    const bool need_jacobians = spec.input_basis == "as";
    SampleSet train =
        problem.sample_batch(cell.n_train, cell.seed, need_jacobians);
    SampleSet test = problem.sample_batch(spec.n_test, kTestSeed, false);

    ReducedBasis output_basis = compute_pod(train.outputs, cell.rank);
    std::optional<Eigen::MatrixXd> input_vectors;
    if (spec.input_basis == "as")
      input_vectors = compute_as(train.jacobians,
                                 problem.measure.realize_covariance(),
                                 cell.rank)
                          .vectors;
    else if (spec.input_basis == "kle")
      input_vectors = compute_kle(problem.measure, cell.rank).vectors;

    TrainConfig cfg;
    cfg.mode = parse_train_mode(cell.mode);
    cfg.max_depth = cell.depth;
    cfg.layer_rank = std::min(spec.k, cell.rank);  // keep narrow cells runnable
    cfg.total_epochs = spec.epochs;
    cfg.batch_size = spec.batch;
    cfg.seed = cell.seed;

    TrainOutcome outcome =
        run_training(train, input_vectors, output_basis.vectors, cfg);
    result.accuracy =
        l2nu_accuracy(outcome.model, test.inputs, test.outputs).l2nu_accuracy;
    result.gap = accuracy_gap(outcome.model, train.inputs, train.outputs,
                              test.inputs, test.outputs);
    result.depth_final = outcome.model.depth();
    result.status = "ok";
    result.ok = true;
  } catch (const NonFiniteLoss& e) {
    result.status = error_label(e);
    result.exit_class = 4;
  } catch (const SolveFailure& e) {
    result.status = error_label(e);
    result.exit_class = 4;
  } catch (const Error& e) {
    result.status = error_label(e);
    result.exit_class = 3;
  }
  const auto end = std::chrono::steady_clock::now();
  result.wall_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(end - start)
          .count();
  return result;
}

SweepSpec parse_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open sweep spec '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ParseError("sweep spec '" + path + "' is not a json object");

  auto require = [&](const char* field) -> const nlohmann::json& {
    auto it = j.find(field);
    if (it == j.end())
      throw UsageError("sweep spec is missing field '" + std::string(field) +
                       "'");
    return *it;
  };

  SweepSpec spec;
  const nlohmann::json& problem = require("problem");
  if (problem.is_string())
    spec.problems.push_back(problem.get<std::string>());
  else if (problem.is_array())
    for (const auto& p : problem) spec.problems.push_back(p.get<std::string>());
  else
    throw UsageError("sweep field 'problem' must be a string or array");

  auto index_list = [&](const char* field) {
    std::vector<Eigen::Index> out;
    const nlohmann::json& v = require(field);
    if (!v.is_array() || v.empty())
      throw UsageError("sweep field '" + std::string(field) +
                       "' must be a non-empty array");
    for (const auto& x : v) out.push_back(x.get<Eigen::Index>());
    return out;
  };
  spec.n_train = index_list("n_train");
  spec.rank = index_list("rank");
  spec.depth = index_list("depth");

  const nlohmann::json& modes = require("mode");
  if (!modes.is_array() || modes.empty())
    throw UsageError("sweep field 'mode' must be a non-empty array");
  for (const auto& m : modes) {
    const std::string name = m.get<std::string>();
    parse_train_mode(name);  // validate eagerly
    spec.modes.push_back(name);
  }

  const nlohmann::json& seeds = require("seeds");
  if (!seeds.is_array() || seeds.empty())
    throw UsageError("sweep field 'seeds' must be a non-empty array");
  for (const auto& s : seeds) spec.seeds.push_back(s.get<std::uint64_t>());

  spec.out_dir = require("out_dir").get<std::string>();
  spec.n_test = j.value("n_test", spec.n_test);
  spec.input_basis = j.value("input_basis", spec.input_basis);
  if (spec.input_basis != "as" && spec.input_basis != "kle" &&
      spec.input_basis != "none")
    throw UsageError("sweep field 'input_basis' must be as, kle or none");
  spec.epochs = j.value("epochs", spec.epochs);
  spec.k = j.value("k", spec.k);
  spec.batch = j.value("batch", spec.batch);
  if (spec.n_test < 1 || spec.epochs < 0 || spec.k < 1 || spec.batch < 1)
    throw UsageError("sweep numeric fields are out of range");
  return spec;
}

int worker_count(std::size_t n_cells) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("RBRN_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) n = requested;
  }
  return std::min<int>(n, static_cast<int>(n_cells));
}

// Linear-interpolation quantile over an already sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

int cmd_sweep(const SweepOptions& o) {
  const SweepSpec spec = parse_sweep_spec(o.spec_path);

  std::vector<SweepCell> cells;
  for (const std::string& problem : spec.problems)
    for (Eigen::Index n : spec.n_train)
      for (Eigen::Index rank : spec.rank)
        for (Eigen::Index depth : spec.depth)
          for (const std::string& mode : spec.modes)
            for (std::uint64_t seed : spec.seeds)
              cells.push_back({problem, n, rank, depth, mode, seed});

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();)
      results[i] = run_cell(cells[i], spec);
  };
  const int n_workers = worker_count(cells.size());
  std::vector<std::thread> workers;
  for (int t = 1; t < n_workers; ++t) workers.emplace_back(drain);
  drain();
  for (std::thread& t : workers) t.join();

  std::filesystem::create_directories(spec.out_dir);
  const std::string cells_path =
      (std::filesystem::path(spec.out_dir) / "cells.csv").string();
  std::ostringstream csv;
  csv << "problem,n_train,rank,depth,mode,seed,accuracy,gap,depth_final,"
         "wall_ms,status\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SweepCell& c = cells[i];
    const CellResult& r = results[i];
    csv << c.problem << ',' << c.n_train << ',' << c.rank << ',' << c.depth
        << ',' << c.mode << ',' << c.seed << ',';
    if (r.ok)
      csv << format_double(r.accuracy) << ',' << format_double(r.gap) << ','
          << r.depth_final;
    else
      csv << ",,";
    csv << ',' << (o.no_timing ? 0 : r.wall_ms) << ',' << r.status << '\n';
  }
  {
    std::ofstream out(cells_path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + cells_path + "'");
    out << csv.str();
  }

  // Quantiles over the seed ensemble, one row per remaining cell key.
  const std::string summary_path =
      (std::filesystem::path(spec.out_dir) / "summary.csv").string();
  std::ostringstream summary;
  summary << "problem,n_train,rank,depth,mode,accuracy_q20,accuracy_q50,"
             "accuracy_q80,n_ok\n";
  const std::size_t group = spec.seeds.size();
  for (std::size_t base = 0; base < cells.size(); base += group) {
    std::vector<double> acc;
    for (std::size_t i = base; i < base + group; ++i)
      if (results[i].ok) acc.push_back(results[i].accuracy);
    std::sort(acc.begin(), acc.end());
    const SweepCell& c = cells[base];
    summary << c.problem << ',' << c.n_train << ',' << c.rank << ','
            << c.depth << ',' << c.mode << ',';
    if (!acc.empty())
      summary << format_double(quantile_sorted(acc, 0.2)) << ','
              << format_double(quantile_sorted(acc, 0.5)) << ','
              << format_double(quantile_sorted(acc, 0.8));
    else
      summary << ",,";
    summary << ',' << acc.size() << '\n';
  }
  {
    std::ofstream out(summary_path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + summary_path + "'");
    out << summary.str();
  }

  std::size_t n_failed = 0;
  int exit_code = 0;
  for (const CellResult& r : results)
    if (!r.ok) {
      ++n_failed;
      exit_code = std::max(exit_code, r.exit_class);
    }
  std::printf("wrote %s (%zu cells, %zu failed)\n", cells_path.c_str(),
              cells.size(), n_failed);
  std::printf("wrote %s\n", summary_path.c_str());
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reduced-basis residual network toolkit"};
  app.require_subcommand(1);

  GenerateOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("generate", "sample a problem into a dataset archive");
  cmd_gen->add_option("--problem", gen.problem,
                      "problem tag (poisson17, poisson33, ridge-cubic, "
                      "ridge-sine, csv:<path>)")
      ->required();
  cmd_gen->add_option("--n", gen.n, "number of samples");
  cmd_gen->add_option("--seed", gen.seed, "sampling seed");
  cmd_gen->add_option("--out", gen.out, "output archive path")->required();
  cmd_gen->add_flag("--with-jacobians", gen.with_jacobians,
                    "also store jacobian samples");
  cmd_gen->add_option("--csv-inputs", gen.csv_inputs,
                      "input column count for csv problems");
  cmd_gen->add_option("--csv-outputs", gen.csv_outputs,
                      "output column count for csv problems");
  cmd_gen->add_flag("--csv-header", gen.csv_header,
                    "skip the first csv record");

  BasisOptions basis;
  CLI::App* cmd_bas = app.add_subcommand("basis", "compute a reduced basis from a dataset");
  cmd_bas->add_option("--data", basis.data, "dataset archive")->required();
  cmd_bas->add_option("--kind", basis.kind, "pod, kle or as")->required();
  cmd_bas->add_option("--rank", basis.rank, "basis rank")->required();
  cmd_bas->add_option("--out", basis.out, "output archive path")->required();

  TrainOptions train;
  CLI::App* cmd_trn = app.add_subcommand("train", "train a model on a dataset");
  cmd_trn->add_option("--data", train.data, "dataset archive")->required();
  cmd_trn->add_option("--input-basis", train.input_basis,
                      "input basis archive (omit to learn the input map)");
  cmd_trn->add_option("--output-basis", train.output_basis,
                      "output basis archive")
      ->required();
  cmd_trn->add_option("--mode", train.mode,
                      "adaptive-all, adaptive-seq or end2end");
  cmd_trn->add_option("--max-depth", train.max_depth,
                      "depth budget (exact depth for end2end)");
  cmd_trn->add_option("--k", train.k, "residual layer rank");
  cmd_trn->add_option("--epochs", train.epochs, "total epoch budget");
  cmd_trn->add_option("--stage-epochs", train.stage_epochs,
                      "epochs per adaptive stage (0: split the budget)");
  cmd_trn->add_option("--patience", train.patience,
                      "stages tolerated without validation improvement");
  cmd_trn->add_option("--batch", train.batch, "minibatch size");
  cmd_trn->add_option("--alpha", train.alpha, "adam step length");
  cmd_trn->add_option("--overfit-gap", train.overfit_gap,
                      "train minus validation accuracy triggering overfit");
  cmd_trn->add_option("--val-fraction", train.val_fraction,
                      "fraction of data held out for validation");
  cmd_trn->add_option("--seed", train.seed, "training seed");
  cmd_trn->add_option("--out", train.out, "output model archive")->required();
  cmd_trn->add_option("--report", train.report,
                      "report path (default <out>.report.jsonl)");

  EvalOptions eval;
  CLI::App* cmd_evl = app.add_subcommand("eval", "evaluate a model on a dataset");
  cmd_evl->add_option("--model", eval.model, "model archive")->required();
  cmd_evl->add_option("--data", eval.data, "dataset archive")->required();

  SweepOptions sweep;
  CLI::App* cmd_swp = app.add_subcommand("sweep", "run a cartesian parameter sweep");
  cmd_swp->add_option("--spec", sweep.spec_path, "sweep spec json")->required();
  cmd_swp->add_flag("--no-timing", sweep.no_timing,
                    "zero the wall_ms column for reproducible output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) return cmd_generate(gen);
    if (cmd_bas->parsed()) return cmd_basis(basis);
    if (cmd_trn->parsed()) return cmd_train(train);
    if (cmd_evl->parsed()) return cmd_eval(eval);
    if (cmd_swp->parsed()) return cmd_sweep(sweep);
  } catch (const UsageError& e) {
    std::cerr << "rbrn: " << e.what() << "\n";
    return 2;
  } catch (const BudgetExceeded& e) {
    std::cerr << "rbrn: " << e.what() << "\n";
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "rbrn: " << e.what() << "\n";
    return 4;
  } catch (const SolveFailure& e) {
    std::cerr << "rbrn: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "rbrn: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "rbrn: unexpected: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
