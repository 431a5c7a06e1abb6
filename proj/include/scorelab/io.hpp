#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scorelab/linalg.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

// Little-endian primitives.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

/// RFC-4180 writer: header row first, CRLF-free ('\n') line endings, fields
/// quoted only when needed, doubles printed with 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);
  CsvWriter& field(double v);
  CsvWriter& field(std::int64_t v);
  CsvWriter& field(std::size_t v) { return field(static_cast<std::int64_t>(v)); }
  CsvWriter& field(int v) { return field(static_cast<std::int64_t>(v)); }
  CsvWriter& field(std::string_view v);
  void end_row();

 private:
  void separator();
  std::ostream& out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

std::string format_double(double v);

// --- dataset binary layout -------------------------------------------------
//
// magic "SCLBDS01", u64 m, u64 N, u64 d, u64 seed, u64 schedule kind
// (0 linear, 1 quadratic, 2 strided), f64 horizon, then f64 bodies:
// x0[i][k], x[i][j][k], z[i][j][k] (trajectory-major). A sample file uses the
// same header with N = 0 and a single n×d body.

struct NoisedDataset;

void write_dataset_binary(const std::string& path, const NoisedDataset& ds);
NoisedDataset read_dataset_binary(const std::string& path);
void write_samples_binary(const std::string& path, const Mat& samples, std::uint64_t seed);
Mat read_samples_binary(const std::string& path);

/// CSV with columns i, j, t, x_0.., z_0.. (one row per trajectory and step).
void write_dataset_csv(std::ostream& out, const NoisedDataset& ds);
/// One row per sample with columns x_0..x_{d-1}.
void write_samples_csv(std::ostream& out, const Mat& samples);

/// SHA-256 hex digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace scorelab
