#include "rbrn/persistence.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace rbrn {

// The on-disk contract pins little-endian payloads; writing raw object
// representations is only valid on a matching host.
static_assert(std::endian::native == std::endian::little,
              "archive code assumes a little-endian host");

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Byte-level writers.

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  put_u64(out, std::bit_cast<std::uint64_t>(x));
}

std::string u64_payload(std::uint64_t v) {
  std::string out;
  put_u64(out, v);
  return out;
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

std::string matrix_payload(const Eigen::MatrixXd& m) {
  std::string out;
  out.reserve(16 + 8 * static_cast<std::size_t>(m.size()));
  append_matrix(out, m);
  return out;
}

std::string vector_payload(const Eigen::VectorXd& v) {
  return matrix_payload(v);
}

void add_section(std::string& out, const std::string& tag,
                 const std::string& payload) {
  if (tag.size() > 16)
    throw UsageError("archive section tag '" + tag + "' exceeds 16 bytes");
  std::string padded = tag;
  padded.resize(16, '\0');
  out += padded;
  put_u64(out, payload.size());
  out += payload;
}

std::string archive_header() {
  std::string out = "RBRN";
  put_u32(out, kArchiveVersion);
  return out;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw UsageError("failed while writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Byte-level readers.

struct Section {
  std::string tag;
  std::string payload;
};

// Sequential cursor over one payload; any shortfall means the section was
// written by something other than the claimed layout.
struct Cursor {
  const std::string& data;
  std::size_t at = 0;

  explicit Cursor(const std::string& d) : data(d) {}

  void need(std::size_t n) const {
    if (data.size() - at < n)
      throw CorruptArchive("section payload is shorter than its layout");
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data[at + static_cast<std::size_t>(i)]))
           << (8 * i);
    at += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  Eigen::MatrixXd matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (rows > (1u << 30) || cols > (1u << 30) ||
        (rows != 0 && cols > data.size() / rows))
      throw CorruptArchive("matrix header claims an implausible size");
    need(8 * static_cast<std::size_t>(rows * cols));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    return m;
  }

  bool done() const { return at == data.size(); }
};

void expect_consumed(const Cursor& cur, const std::string& tag) {
  if (!cur.done())
    throw CorruptArchive("section '" + tag + "' holds trailing bytes");
}

std::uint64_t u64_section(const Section& s) {
  Cursor cur(s.payload);
  const std::uint64_t v = cur.u64();
  expect_consumed(cur, s.tag);
  return v;
}

Eigen::MatrixXd matrix_section(const Section& s) {
  Cursor cur(s.payload);
  Eigen::MatrixXd m = cur.matrix();
  expect_consumed(cur, s.tag);
  return m;
}

Eigen::VectorXd vector_section(const Section& s) {
  Eigen::MatrixXd m = matrix_section(s);
  if (m.cols() != 1 && m.size() != 0)
    throw CorruptArchive("section '" + s.tag + "' is not a column vector");
  return Eigen::VectorXd(m.reshaped());
}

std::vector<Section> parse_archive(const std::string& bytes,
                                   const std::string& path) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "RBRN") != 0)
    throw NotAnArchive("'" + path + "' is not an rbrn archive");
  if (bytes.size() < 8)
    throw CorruptArchive("'" + path + "' ends inside the version field");
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i)
    version |= static_cast<std::uint32_t>(
                   static_cast<unsigned char>(bytes[4 + static_cast<std::size_t>(i)]))
               << (8 * i);
  if (version > kArchiveVersion)
    throw UnsupportedVersion("'" + path + "' has archive version " +
                             std::to_string(version) + "; this build reads up to " +
                             std::to_string(kArchiveVersion));
  if (version == 0)
    throw CorruptArchive("'" + path + "' has archive version 0");

  std::vector<Section> sections;
  std::size_t at = 8;
  while (at < bytes.size()) {
    if (bytes.size() - at < 24)
      throw CorruptArchive("'" + path + "' is truncated mid section header");
    std::string tag = bytes.substr(at, 16);
    while (!tag.empty() && tag.back() == '\0') tag.pop_back();
    at += 16;
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
      len |= static_cast<std::uint64_t>(
                 static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]))
             << (8 * i);
    at += 8;
    if (bytes.size() - at < len)
      throw CorruptArchive("'" + path + "' is truncated inside section '" +
                           tag + "'");
    sections.push_back({tag, bytes.substr(at, len)});
    at += len;
  }
  return sections;
}

const Section* find_section(const std::vector<Section>& sections,
                            const std::string& tag) {
  for (const Section& s : sections)
    if (s.tag == tag) return &s;
  return nullptr;
}

const Section& require_section(const std::vector<Section>& sections,
                               const std::string& tag) {
  const Section* s = find_section(sections, tag);
  if (s == nullptr)
    throw CorruptArchive("archive is missing its '" + tag + "' section");
  return *s;
}

void check_kind(const std::vector<Section>& sections, const std::string& want,
                const std::string& path) {
  const Section& kind = require_section(sections, "KIND");
  if (kind.payload != want)
    throw CorruptArchive("'" + path + "' holds a " +
                         (kind.payload.empty() ? std::string("(unnamed)")
                                               : kind.payload) +
                         " archive, expected " + want);
}

void warn_unknown(const std::vector<Section>& sections,
                  const std::vector<std::string>& known,
                  const std::string& path) {
  for (const Section& s : sections) {
    bool recognized = false;
    for (const std::string& k : known)
      if (s.tag == k || s.tag.rfind(k, 0) == 0) recognized = true;
    if (!recognized)
      std::cerr << "rbrn: skipping unknown section '" << s.tag << "' in '"
                << path << "'\n";
  }
}

std::string layer_tag(std::size_t index, const char* part) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "L%03zu.%s", index, part);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// SampleSet.

void save_sample_set(const SampleSet& data, const std::string& path) {
  std::string out = archive_header();
  add_section(out, "KIND", "sample-set");
  add_section(out, "TAG", data.problem_tag);
  add_section(out, "SEED", u64_payload(data.seed));
  add_section(out, "INPUTS", matrix_payload(data.inputs));
  add_section(out, "OUTPUTS", matrix_payload(data.outputs));
  if (data.has_jacobians()) {
    std::string jac;
    put_u64(jac, data.jacobians.size());
    for (const Eigen::MatrixXd& j : data.jacobians) append_matrix(jac, j);
    add_section(out, "JACOBIANS", jac);
  }
  write_file(path, out);
}

SampleSet load_sample_set(const std::string& path) {
  const std::vector<Section> sections = parse_archive(read_file(path), path);
  check_kind(sections, "sample-set", path);
  warn_unknown(sections,
               {"KIND", "TAG", "SEED", "INPUTS", "OUTPUTS", "JACOBIANS"},
               path);

  SampleSet data;
  data.problem_tag = require_section(sections, "TAG").payload;
  data.seed = u64_section(require_section(sections, "SEED"));
  data.inputs = matrix_section(require_section(sections, "INPUTS"));
  data.outputs = matrix_section(require_section(sections, "OUTPUTS"));
  if (data.outputs.rows() != data.inputs.rows())
    throw CorruptArchive("input and output sample counts disagree in '" +
                         path + "'");
  if (const Section* jac = find_section(sections, "JACOBIANS")) {
    Cursor cur(jac->payload);
    const std::uint64_t count = cur.u64();
    if (count != static_cast<std::uint64_t>(data.inputs.rows()))
      throw CorruptArchive("jacobian count disagrees with sample count in '" +
                           path + "'");
    data.jacobians.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Eigen::MatrixXd j = cur.matrix();
      if (j.rows() != data.outputs.cols() || j.cols() != data.inputs.cols())
        throw CorruptArchive("jacobian " + std::to_string(i) +
                             " has inconsistent shape in '" + path + "'");
      data.jacobians.push_back(std::move(j));
    }
    expect_consumed(cur, "JACOBIANS");
  }
  return data;
}

// ---------------------------------------------------------------------------
// ReducedBasis.

void save_basis(const ReducedBasis& basis, const std::string& path) {
  std::string out = archive_header();
  add_section(out, "KIND", "reduced-basis");
  add_section(out, "BKIND", to_string(basis.kind));
  add_section(out, "NSAMPLES",
              u64_payload(static_cast<std::uint64_t>(basis.n_samples)));
  add_section(out, "VECTORS", matrix_payload(basis.vectors));
  add_section(out, "EIGVALS", vector_payload(basis.eigenvalues));
  if (basis.metric_factor.size() != 0)
    add_section(out, "METRIC", matrix_payload(basis.metric_factor));
  write_file(path, out);
}

ReducedBasis load_basis(const std::string& path) {
  const std::vector<Section> sections = parse_archive(read_file(path), path);
  check_kind(sections, "reduced-basis", path);
  warn_unknown(sections,
               {"KIND", "BKIND", "NSAMPLES", "VECTORS", "EIGVALS", "METRIC"},
               path);

  ReducedBasis basis;
  try {
    basis.kind = parse_basis_kind(require_section(sections, "BKIND").payload);
  } catch (const UsageError& e) {
    throw CorruptArchive(std::string("'" + path + "': ") + e.what());
  }
  basis.n_samples = static_cast<Eigen::Index>(
      u64_section(require_section(sections, "NSAMPLES")));
  basis.vectors = matrix_section(require_section(sections, "VECTORS"));
  basis.eigenvalues = vector_section(require_section(sections, "EIGVALS"));
  if (const Section* metric = find_section(sections, "METRIC"))
    basis.metric_factor = matrix_section(*metric);
  if (basis.vectors.cols() > basis.eigenvalues.size())
    throw CorruptArchive("basis rank exceeds its spectrum length in '" +
                         path + "'");
  return basis;
}

// ---------------------------------------------------------------------------
// ResNetModel.

void save_model(const ResNetModel& model, const std::string& path) {
  std::string out = archive_header();
  add_section(out, "KIND", "resnet-model");
  if (const auto* proj = std::get_if<BasisProjection>(&model.input_map)) {
    add_section(out, "IMAP", "basis-projection");
    add_section(out, "V", matrix_payload(proj->v));
  } else {
    const auto& prol = std::get<LearnedProlongation>(model.input_map);
    add_section(out, "IMAP", "learned-prolongation");
    add_section(out, "P", matrix_payload(prol.p));
    add_section(out, "C", vector_payload(prol.c));
  }
  add_section(out, "PHI", matrix_payload(model.output_basis));
  add_section(out, "BQ", vector_payload(model.output_bias));
  add_section(out, "DEPTH",
              u64_payload(static_cast<std::uint64_t>(model.depth())));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    add_section(out, layer_tag(l, "W0"), matrix_payload(model.layers[l].w0));
    add_section(out, layer_tag(l, "B"), vector_payload(model.layers[l].b));
    add_section(out, layer_tag(l, "W1"), matrix_payload(model.layers[l].w1));
  }
  std::string frozen(model.frozen.size(), '\0');
  for (std::size_t l = 0; l < model.frozen.size(); ++l)
    frozen[l] = model.frozen[l] ? '\1' : '\0';
  add_section(out, "FROZEN", frozen);
  write_file(path, out);
}

ResNetModel load_model(const std::string& path) {
  const std::vector<Section> sections = parse_archive(read_file(path), path);
  check_kind(sections, "resnet-model", path);
  warn_unknown(sections,
               {"KIND", "IMAP", "V", "P", "C", "PHI", "BQ", "DEPTH", "L",
                "FROZEN"},
               path);

  ResNetModel model;
  const std::string& imap = require_section(sections, "IMAP").payload;
  if (imap == "basis-projection") {
    model.input_map = BasisProjection{matrix_section(require_section(sections, "V"))};
  } else if (imap == "learned-prolongation") {
    model.input_map = LearnedProlongation{
        matrix_section(require_section(sections, "P")),
        vector_section(require_section(sections, "C"))};
  } else {
    throw CorruptArchive("unknown input map kind '" + imap + "' in '" + path +
                         "'");
  }
  model.output_basis = matrix_section(require_section(sections, "PHI"));
  model.output_bias = vector_section(require_section(sections, "BQ"));
  const std::uint64_t depth = u64_section(require_section(sections, "DEPTH"));
  if (depth > 10000)
    throw CorruptArchive("model depth " + std::to_string(depth) +
                         " is implausible in '" + path + "'");
  model.layers.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    model.layers[l].w0 =
        matrix_section(require_section(sections, layer_tag(l, "W0")));
    model.layers[l].b =
        vector_section(require_section(sections, layer_tag(l, "B")));
    model.layers[l].w1 =
        matrix_section(require_section(sections, layer_tag(l, "W1")));
  }
  const Section& frozen = require_section(sections, "FROZEN");
  if (frozen.payload.size() != depth)
    throw CorruptArchive("frozen flags do not match model depth in '" + path +
                         "'");
  model.frozen.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const char flag = frozen.payload[l];
    if (flag != '\0' && flag != '\1')
      throw CorruptArchive("frozen flag " + std::to_string(l) +
                           " is not 0 or 1 in '" + path + "'");
    model.frozen[l] = flag == '\1';
  }
  try {
    model.check_shapes();
  } catch (const Error& e) {
    throw CorruptArchive(std::string("inconsistent model in '" + path +
                                     "': ") + e.what());
  }
  return model;
}

// ---------------------------------------------------------------------------
// TrainReport (JSON lines).

namespace {

json encode_double(double x) {
  if (std::isfinite(x)) return json(x);
  if (std::isnan(x)) return json("nan");
  return json(x > 0 ? "inf" : "-inf");
}

double decode_double(const json& j, const char* field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw CorruptArchive(std::string("report field '") + field +
                       "' is not a number");
}

json require_field(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end())
    throw CorruptArchive(std::string("report line is missing field '") +
                         field + "'");
  return *it;
}

}  // namespace

void save_report(const TrainReport& report, const std::string& path) {
  std::string out;
  json head;
  head["type"] = "train-report";
  head["version"] = kArchiveVersion;
  head["stopping_reason"] = to_string(report.stopping_reason);
  head["final_accuracy"] = encode_double(report.final_accuracy);
  head["epochs_consumed"] = report.epochs_consumed;
  head["stages"] = report.stages.size();
  out += head.dump();
  out += '\n';
  for (std::size_t i = 0; i < report.stages.size(); ++i) {
    const StageRecord& rec = report.stages[i];
    json line;
    line["stage"] = i;
    line["depth"] = rec.depth;
    line["post_append_loss"] = encode_double(rec.post_append_loss);
    line["train_loss"] = encode_double(rec.train_loss);
    line["val_accuracy"] = encode_double(rec.val_accuracy);
    line["epochs_run"] = rec.epochs_run;
    out += line.dump();
    out += '\n';
  }
  write_file(path, out);
}

TrainReport load_report(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw NotAnArchive("'" + path + "' is not a train-report file");
  json head = json::parse(line, nullptr, false);
  if (head.is_discarded() || !head.is_object() ||
      head.value("type", std::string()) != "train-report")
    throw NotAnArchive("'" + path + "' is not a train-report file");
  const std::uint64_t version = head.value("version", std::uint64_t{0});
  if (version > kArchiveVersion)
    throw UnsupportedVersion("'" + path + "' has report version " +
                             std::to_string(version));

  TrainReport report;
  try {
    report.stopping_reason = parse_stopping_reason(
        require_field(head, "stopping_reason").get<std::string>());
  } catch (const UsageError& e) {
    throw CorruptArchive(std::string("'" + path + "': ") + e.what());
  }
  report.final_accuracy =
      decode_double(require_field(head, "final_accuracy"), "final_accuracy");
  report.epochs_consumed = require_field(head, "epochs_consumed")
                               .get<Eigen::Index>();
  const std::size_t n_stages = require_field(head, "stages").get<std::size_t>();

  for (std::size_t i = 0; i < n_stages; ++i) {
    if (!std::getline(in, line))
      throw CorruptArchive("'" + path + "' is missing stage line " +
                           std::to_string(i));
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      throw CorruptArchive("'" + path + "' has a malformed stage line " +
                           std::to_string(i));
    StageRecord rec;
    rec.depth = require_field(obj, "depth").get<Eigen::Index>();
    rec.post_append_loss =
        decode_double(require_field(obj, "post_append_loss"),
                      "post_append_loss");
    rec.train_loss =
        decode_double(require_field(obj, "train_loss"), "train_loss");
    rec.val_accuracy =
        decode_double(require_field(obj, "val_accuracy"), "val_accuracy");
    rec.epochs_run = require_field(obj, "epochs_run").get<Eigen::Index>();
    report.stages.push_back(rec);
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV ingestion.

namespace {

struct CsvField {
  std::string text;
  std::size_t line;  // 1-based line the field starts on
};

using CsvRecord = std::vector<CsvField>;

// RFC-4180 splitter: quoted fields may contain commas, escaped quotes ("")
// and line breaks; CR, LF and CRLF all end a record.
std::vector<CsvRecord> split_csv(const std::string& text,
                                 const std::string& path) {
  std::vector<CsvRecord> records;
  CsvRecord record;
  CsvField field{std::string(), 1};
  std::size_t line = 1;
  bool in_quotes = false;
  bool field_open = false;  // buffer holds a field (possibly empty)

  auto end_field = [&] {
    record.push_back(field);
    field.text.clear();
    field_open = false;
  };
  auto end_record = [&] {
    if (field_open || !record.empty()) {
      end_field();
      records.push_back(record);
      record.clear();
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.text.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.text.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field.text.empty()) {  // quote at field start opens quoting
          in_quotes = true;
          if (!field_open) {
            field_open = true;
            field.line = line;
          }
        } else {
          field.text.push_back(ch);  // interior quote kept verbatim
        }
        break;
      case ',':
        if (!field_open) field.line = line;
        end_field();
        field_open = true;  // a comma always opens the next field
        field.line = line;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (!field_open) {
          field_open = true;
          field.line = line;
        }
        field.text.push_back(ch);
        break;
    }
  }
  if (in_quotes)
    throw ParseError("'" + path + "' ends inside a quoted field opened on line " +
                     std::to_string(field.line));
  end_record();
  return records;
}

double parse_field(const CsvField& field, const std::string& path) {
  std::size_t a = 0;
  std::size_t b = field.text.size();
  while (a < b && (field.text[a] == ' ' || field.text[a] == '\t')) ++a;
  while (b > a && (field.text[b - 1] == ' ' || field.text[b - 1] == '\t')) --b;
  double value = 0.0;
  const char* first = field.text.data() + a;
  const char* last = field.text.data() + b;
  auto [end, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || end != last || first == last)
    throw ParseError("'" + path + "' line " + std::to_string(field.line) +
                     ": field '" + field.text + "' is not a number");
  return value;
}

}  // namespace

SampleSet import_csv(const std::string& path, Eigen::Index input_cols,
                     Eigen::Index output_cols, bool has_header) {
  if (input_cols < 1 || output_cols < 1)
    throw UsageError("import_csv needs at least one input and one output column");

  std::vector<CsvRecord> records = split_csv(read_file(path), path);
  std::size_t first = 0;
  if (has_header && !records.empty()) first = 1;
  const std::size_t n = records.size() - first;
  if (n == 0) throw EmptySample("'" + path + "' holds no data rows");

  const Eigen::Index width = input_cols + output_cols;
  SampleSet data;
  data.inputs.resize(static_cast<Eigen::Index>(n), input_cols);
  data.outputs.resize(static_cast<Eigen::Index>(n), output_cols);
  for (std::size_t i = 0; i < n; ++i) {
    const CsvRecord& rec = records[first + i];
    if (static_cast<Eigen::Index>(rec.size()) != width)
      throw ParseError("'" + path + "' line " +
                       std::to_string(rec.front().line) + ": row has " +
                       std::to_string(rec.size()) + " fields, expected " +
                       std::to_string(width));
    for (Eigen::Index c = 0; c < input_cols; ++c)
      data.inputs(static_cast<Eigen::Index>(i), c) =
          parse_field(rec[static_cast<std::size_t>(c)], path);
    for (Eigen::Index c = 0; c < output_cols; ++c)
      data.outputs(static_cast<Eigen::Index>(i), c) =
          parse_field(rec[static_cast<std::size_t>(input_cols + c)], path);
  }
  data.seed = 0;
  data.problem_tag =
      "csv:" + std::filesystem::path(path).filename().string();
  return data;
}

}  // namespace rbrn
