// End-to-end tests of the command line driver: every subcommand is run as a
// child process against real files, checking output, artifacts, determinism
// and the documented exit codes (0 ok, 2 usage, 3 data/archive, 4 numeric).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rbrn/persistence.hpp"
#include "rbrn/training.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "rbrn_cli_work";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_in(const std::string& name) {
  return (work_dir() / name).string();
}

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr merged
};

CliRun run_cli(const std::string& args) {
  static int counter = 0;
  const std::string capture = path_in("capture_" + std::to_string(counter++));
  const std::string cmd =
      std::string(RBRN_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  std::ifstream in(capture, std::ios::binary);
  r.output.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// Value printed after "key " on its own line, or "" when absent.
std::string value_after(const std::string& out, const std::string& key) {
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

// Eigenvalue printed for 1-based index `want` in the basis spectrum table.
double eigenvalue_at(const std::string& out, long want) {
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line)) {
    long idx = 0;
    double ev = 0.0, tail = 0.0;
    if (std::sscanf(line.c_str(), "%ld %lf %lf", &idx, &ev, &tail) == 3 &&
        idx == want)
      return ev;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("generate is deterministic and reports dataset shapes") {
  const std::string a = path_in("gen_a.rbrn");
  const std::string b = path_in("gen_b.rbrn");

  CliRun first =
      run_cli("generate --problem ridge-sine --n 8 --seed 5 --out " + a);
  CHECK(first.code == 0);
  CHECK(first.output.find("N=8 d_M=32 d_Q=16 jacobians=no") !=
        std::string::npos);

  CliRun second =
      run_cli("generate --problem ridge-sine --n 8 --seed 5 --out " + b);
  CHECK(second.code == 0);
  CHECK(read_bytes(a) == read_bytes(b));

  CliRun poisson =
      run_cli("generate --problem poisson17 --n 8 --seed 1 --out " + a);
  CHECK(poisson.code == 0);
  CHECK(poisson.output.find("N=8 d_M=289 d_Q=289 jacobians=no") !=
        std::string::npos);

  CliRun with_jac = run_cli(
      "generate --problem ridge-sine --n 4 --seed 2 --with-jacobians --out " +
      a);
  CHECK(with_jac.code == 0);
  CHECK(with_jac.output.find("jacobians=yes") != std::string::npos);
}

TEST_CASE("generate rejects bad usage with exit code 2") {
  CHECK(run_cli("generate --problem ridge-sine --n 4").code == 2);  // no --out
  CHECK(run_cli("generate --problem no-such-problem --n 4 --out " +
                path_in("x.rbrn"))
            .code == 2);
  CHECK(run_cli("generate --problem ridge-sine --n 0 --out " +
                path_in("x.rbrn"))
            .code == 2);
  const std::string csv = path_in("tiny.csv");
  write_text(csv, "1,2\n");
  CHECK(run_cli("generate --problem csv:" + csv +
                " --csv-inputs 1 --csv-outputs 1 --with-jacobians --out " +
                path_in("x.rbrn"))
            .code == 2);
  CHECK(run_cli("generate --problem csv:" + csv + " --out " +
                path_in("x.rbrn"))
            .code == 2);  // column counts missing
}

TEST_CASE("csv import, truncation and rank-1 spectrum through basis") {
  const std::string csv = path_in("ridge1.csv");
  std::ostringstream rows;
  for (int i = 1; i <= 5; ++i)
    rows << i << ',' << 2 * i << ',' << 3 * i << ',' << -i << '\n';
  write_text(csv, rows.str());

  const std::string data = path_in("csv_data.rbrn");
  CliRun gen = run_cli("generate --problem csv:" + csv +
                       " --csv-inputs 2 --csv-outputs 2 --out " + data);
  CHECK(gen.code == 0);
  CHECK(gen.output.find("N=5 d_M=2 d_Q=2") != std::string::npos);

  CliRun trunc = run_cli("generate --problem csv:" + csv +
                         " --csv-inputs 2 --csv-outputs 2 --n 3 --out " +
                         path_in("csv_head.rbrn"));
  CHECK(trunc.code == 0);
  CHECK(trunc.output.find("N=3") != std::string::npos);

  CHECK(run_cli("generate --problem csv:" + csv +
                " --csv-inputs 2 --csv-outputs 2 --n 9 --out " +
                path_in("csv_over.rbrn"))
            .code == 2);

  const std::string with_header = path_in("ridge1h.csv");
  write_text(with_header, "a,b,c,d\n" + rows.str());
  CliRun header = run_cli("generate --problem csv:" + with_header +
                          " --csv-inputs 2 --csv-outputs 2 --csv-header "
                          "--out " +
                          path_in("csv_hdr.rbrn"));
  CHECK(header.code == 0);
  CHECK(header.output.find("N=5") != std::string::npos);

  // Outputs are multiples of one vector, so the second eigenvalue vanishes.
  CliRun basis = run_cli("basis --data " + data + " --kind pod --rank 1 "
                         "--out " +
                         path_in("csv_pod.rbrn"));
  CHECK(basis.code == 0);
  CHECK(basis.output.find("kind=pod dim=2 rank=1") != std::string::npos);
  const double lambda2 = eigenvalue_at(basis.output, 2);
  CHECK(std::isfinite(lambda2));
  CHECK(lambda2 <= 1e-12);
}

TEST_CASE("basis validations map onto the exit-code contract") {
  const std::string data = path_in("basis_data.rbrn");
  REQUIRE(run_cli("generate --problem ridge-sine --n 16 --seed 9 --out " +
                  data)
              .code == 0);

  CHECK(run_cli("basis --data " + data + " --kind pod --rank 0 --out " +
                path_in("b0.rbrn"))
            .code == 2);
  CHECK(run_cli("basis --data " + data + " --kind nonsense --rank 2 --out " +
                path_in("b1.rbrn"))
            .code == 2);
  CHECK(run_cli("basis --data " + path_in("no_such_file.rbrn") +
                " --kind pod --rank 2 --out " + path_in("b2.rbrn"))
            .code == 2);
  // Active subspaces need Jacobian samples; this dataset has none.
  CHECK(run_cli("basis --data " + data + " --kind as --rank 2 --out " +
                path_in("b3.rbrn"))
            .code == 3);
}

TEST_CASE("train and eval round trip with deterministic artifacts") {
  const std::string data = path_in("train_data.rbrn");
  REQUIRE(run_cli("generate --problem ridge-sine --n 64 --seed 3 "
                  "--with-jacobians --out " +
                  data)
              .code == 0);
  const std::string pod = path_in("train_pod.rbrn");
  const std::string as = path_in("train_as.rbrn");
  REQUIRE(run_cli("basis --data " + data + " --kind pod --rank 4 --out " +
                  pod)
              .code == 0);
  REQUIRE(run_cli("basis --data " + data + " --kind as --rank 4 --out " + as)
              .code == 0);

  const std::string model = path_in("model.rbrn");
  const std::string train_args = "train --data " + data + " --input-basis " +
                                 as + " --output-basis " + pod +
                                 " --mode adaptive-all --max-depth 3 --k 2 "
                                 "--epochs 12 --seed 7 --out ";
  CliRun train = run_cli(train_args + model);
  CHECK(train.code == 0);
  CHECK(fs::exists(model));
  CHECK(fs::exists(model + ".report.jsonl"));

  const std::string acc_text = value_after(train.output, "final_accuracy");
  REQUIRE(!acc_text.empty());
  const double accuracy = std::stod(acc_text);
  CHECK(std::isfinite(accuracy));
  CHECK(accuracy <= 1.0);
  const std::string reason = value_after(train.output, "stopping_reason");
  CHECK((reason == "MaxDepth" || reason == "OverfitDetected" ||
         reason == "ValidationStalled"));
  const long depth = std::stol(value_after(train.output, "depth"));
  CHECK(depth >= 0);
  CHECK(depth <= 3);
  CHECK(std::stol(value_after(train.output, "epochs_consumed")) >= 0);

  // The printed accuracy round-trips through the report artifact.
  rbrn::TrainReport report = rbrn::load_report(model + ".report.jsonl");
  CHECK(report.final_accuracy ==
        doctest::Approx(accuracy).epsilon(1e-11));

  // Same seed, same data: the model archive is byte-identical.
  const std::string model2 = path_in("model2.rbrn");
  CliRun again = run_cli(train_args + model2);
  CHECK(again.code == 0);
  CHECK(read_bytes(model) == read_bytes(model2));

  CliRun eval = run_cli("eval --model " + model + " --data " + data);
  CHECK(eval.code == 0);
  const std::string eval_acc = value_after(eval.output, "accuracy");
  REQUIRE(!eval_acc.empty());
  CHECK(std::isfinite(std::stod(eval_acc)));
  CHECK(value_after(eval.output, "n_test") == "64");
  CHECK(value_after(eval.output, "n_skipped") == "0");

  // Learned input map: training without --input-basis also succeeds.
  CliRun learned = run_cli("train --data " + data + " --output-basis " + pod +
                           " --max-depth 1 --k 2 --epochs 4 --out " +
                           path_in("model_lp.rbrn"));
  CHECK(learned.code == 0);

  // Exact-depth mode builds precisely the requested depth.
  CliRun end2end = run_cli("train --data " + data + " --input-basis " + as +
                           " --output-basis " + pod +
                           " --mode end2end --max-depth 2 --k 2 --epochs 6 "
                           "--out " +
                           path_in("model_e2e.rbrn"));
  CHECK(end2end.code == 0);
  CHECK(value_after(end2end.output, "depth") == "2");

  // Residual rank above the latent dimension is a data error.
  CHECK(run_cli("train --data " + data + " --input-basis " + as +
                " --output-basis " + pod + " --k 10 --epochs 4 --out " +
                path_in("model_bad.rbrn"))
            .code == 3);
  CHECK(run_cli("train --data " + data + " --output-basis " + pod +
                " --mode nonsense --out " + path_in("model_bad.rbrn"))
            .code == 2);
  // A dataset archive is not a model archive.
  CHECK(run_cli("eval --model " + data + " --data " + data).code == 3);
}

TEST_CASE("sweep runs the full grid deterministically and summarizes") {
  const std::string dir1 = path_in("sweep1");
  const std::string dir2 = path_in("sweep2");
  auto spec_json = [](const std::string& out_dir) {
    return std::string("{\n") +
           "  \"problem\": [\"ridge-sine\", \"ridge-cubic\"],\n"
           "  \"n_train\": [16, 32],\n"
           "  \"rank\": [2],\n"
           "  \"depth\": [1],\n"
           "  \"mode\": [\"adaptive-all\"],\n"
           "  \"seeds\": [1, 2, 3],\n"
           "  \"n_test\": 16,\n"
           "  \"epochs\": 4,\n"
           "  \"k\": 2,\n"
           "  \"batch\": 4,\n"
           "  \"input_basis\": \"as\",\n"
           "  \"out_dir\": \"" +
           out_dir + "\"\n}\n";
  };
  const std::string spec1 = path_in("sweep1.json");
  write_text(spec1, spec_json(dir1));
  CliRun sweep = run_cli("sweep --spec " + spec1 + " --no-timing");
  CHECK(sweep.code == 0);
  CHECK(sweep.output.find("12 cells, 0 failed") != std::string::npos);

  const std::string cells = read_bytes(dir1 + "/cells.csv");
  CHECK(count_lines(cells) == 13);  // header + 2*2*1*1*1*3 rows
  CHECK(cells.rfind("problem,n_train,rank,depth,mode,seed,accuracy,gap,"
                    "depth_final,wall_ms,status\n",
                    0) == 0);
  {
    std::istringstream lines(cells);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
      CHECK(line.size() >= 3);
      CHECK(line.substr(line.size() - 3) == ",ok");
      CHECK(line.find(",0,ok") != std::string::npos);  // timing zeroed
    }
  }

  const std::string summary = read_bytes(dir1 + "/summary.csv");
  CHECK(count_lines(summary) == 5);  // header + one row per non-seed key
  CHECK(summary.rfind("problem,n_train,rank,depth,mode,accuracy_q20,"
                      "accuracy_q50,accuracy_q80,n_ok\n",
                      0) == 0);
  {
    std::istringstream lines(summary);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      std::istringstream fields(line);
      std::string f;
      std::vector<std::string> cols;
      while (std::getline(fields, f, ',')) cols.push_back(f);
      REQUIRE(cols.size() == 9);
      const double q20 = std::stod(cols[5]);
      const double q50 = std::stod(cols[6]);
      const double q80 = std::stod(cols[7]);
      CHECK(q20 <= q50);
      CHECK(q50 <= q80);
      CHECK(cols[8] == "3");
    }
  }

  // Identical spec, fresh directory: byte-identical tables.
  const std::string spec2 = path_in("sweep2.json");
  write_text(spec2, spec_json(dir2));
  CHECK(run_cli("sweep --spec " + spec2 + " --no-timing").code == 0);
  CHECK(read_bytes(dir2 + "/cells.csv") == cells);
  CHECK(read_bytes(dir2 + "/summary.csv") == summary);
}

TEST_CASE("sweep records per-cell failures and propagates exit codes") {
  const std::string dir = path_in("sweep_fail");
  const std::string spec = path_in("sweep_fail.json");
  write_text(spec, "{\n"
                   "  \"problem\": [\"ridge-sine\"],\n"
                   "  \"n_train\": [16],\n"
                   "  \"rank\": [2, 1000],\n"
                   "  \"depth\": [1],\n"
                   "  \"mode\": [\"adaptive-all\"],\n"
                   "  \"seeds\": [1],\n"
                   "  \"n_test\": 8,\n"
                   "  \"epochs\": 2,\n"
                   "  \"k\": 2,\n"
                   "  \"input_basis\": \"as\",\n"
                   "  \"out_dir\": \"" +
                       dir + "\"\n}\n");
  CliRun sweep = run_cli("sweep --spec " + spec + " --no-timing");
  CHECK(sweep.code == 3);  // the impossible rank is a data error
  CHECK(sweep.output.find("2 cells, 1 failed") != std::string::npos);

  const std::string cells = read_bytes(dir + "/cells.csv");
  CHECK(cells.find("ridge-sine,16,1000,1,adaptive-all,1,,,,0,RankError\n") !=
        std::string::npos);
  const std::string summary = read_bytes(dir + "/summary.csv");
  CHECK(summary.find("ridge-sine,16,1000,1,adaptive-all,,,,0\n") !=
        std::string::npos);
}

TEST_CASE("sweep spec errors map onto the exit-code contract") {
  const std::string dir = path_in("sweep_err");
  const std::string incomplete = path_in("sweep_incomplete.json");
  write_text(incomplete, "{ \"problem\": [\"ridge-sine\"], \"out_dir\": \"" +
                             dir + "\" }\n");
  CHECK(run_cli("sweep --spec " + incomplete).code == 2);

  const std::string broken = path_in("sweep_broken.json");
  write_text(broken, "{nope\n");
  CHECK(run_cli("sweep --spec " + broken).code == 3);

  CHECK(run_cli("sweep --spec " + path_in("no_such_spec.json")).code == 2);
}
