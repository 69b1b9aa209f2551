#pragma once

#include <string>

#include "rbrn/problems.hpp"
#include "rbrn/reduced_basis.hpp"
#include "rbrn/resnet.hpp"
#include "rbrn/training.hpp"

namespace rbrn {

// Binary archive layout: 4-byte magic "RBRN", unsigned 32-bit little-endian
// version (currently 1), then a flat list of sections.  Each section is a
// 16-byte NUL-padded ASCII tag, a u64 little-endian payload length, and the
// payload bytes.  Matrix payloads carry u64 rows, u64 cols, then rows*cols
// IEEE-754 doubles, little-endian, row-major.  The format has no timestamps
// or other nondeterminism: writing the same value twice yields byte-identical
// files, and read(write(x)) is bit-identical.  Readers skip sections they do
// not recognize (with a warning on stderr) so version-1 tools can open files
// that later tools extended.
inline constexpr std::uint32_t kArchiveVersion = 1;

// Errors shared by every loader: a file without the magic prefix raises
// NotAnArchive, structural damage (truncation, missing or inconsistent
// sections) raises CorruptArchive, and a version above kArchiveVersion
// raises UnsupportedVersion.

void save_sample_set(const SampleSet& data, const std::string& path);
SampleSet load_sample_set(const std::string& path);

void save_basis(const ReducedBasis& basis, const std::string& path);
ReducedBasis load_basis(const std::string& path);

void save_model(const ResNetModel& model, const std::string& path);
ResNetModel load_model(const std::string& path);

// Reports are JSON lines rather than binary so they stay greppable: one
// summary object on the first line, then one object per stage.  Doubles use
// shortest round-trip formatting, so reload is bit-exact and rewriting is
// byte-identical; non-finite values are encoded as the strings "nan",
// "inf", and "-inf".
void save_report(const TrainReport& report, const std::string& path);
TrainReport load_report(const std::string& path);

// Reads a numeric CSV (RFC-4180 field splitting, '.' decimal separator)
// whose rows hold input_cols input fields followed by output_cols output
// fields.  With has_header the first record is discarded.  The result has no
// Jacobians, seed 0, and problem_tag "csv:<basename>".  Ragged rows and
// non-numeric fields raise ParseError naming the offending line; a file with
// no data rows raises EmptySample.
SampleSet import_csv(const std::string& path, Eigen::Index input_cols,
                     Eigen::Index output_cols, bool has_header);

}  // namespace rbrn
