#include "scorelab/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "scorelab/errors.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xff);
  out.write(bytes.data(), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8))
    throw std::runtime_error("unexpected end of binary file");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header)
    : out_(out), columns_(header.size()) {
  for (const auto& h : header) field(std::string_view(h));
  end_row();
}

void CsvWriter::separator() {
  if (in_row_++ > 0) out_ << ',';
}

CsvWriter& CsvWriter::field(double v) {
  separator();
  out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::field(std::int64_t v) {
  separator();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::field(std::string_view v) {
  separator();
  if (v.find_first_of(",\"\r\n") == std::string_view::npos) {
    out_ << v;
    return *this;
  }
  out_ << '"';
  for (char c : v) {
    if (c == '"') out_ << '"';
    out_ << c;
  }
  out_ << '"';
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) throw std::logic_error("csv row has the wrong number of fields");
  out_ << '\n';
  in_row_ = 0;
}

namespace {

constexpr char kDatasetMagic[8] = {'S', 'C', 'L', 'B', 'D', 'S', '0', '1'};

std::uint64_t kind_code(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return 0;
    case ScheduleKind::quadratic: return 1;
    case ScheduleKind::strided: return 2;
  }
  return 0;
}

void write_header(std::ostream& out, std::uint64_t m, std::uint64_t n, std::uint64_t d,
                  std::uint64_t seed, std::uint64_t kind, double horizon) {
  out.write(kDatasetMagic, 8);
  write_u64(out, m);
  write_u64(out, n);
  write_u64(out, d);
  write_u64(out, seed);
  write_u64(out, kind);
  write_f64(out, horizon);
}

struct Header {
  std::uint64_t m, n, d, seed, kind;
  double horizon;
};

Header read_header(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw ConfigError("not a scorelab dataset file");
  Header h{};
  h.m = read_u64(in);
  h.n = read_u64(in);
  h.d = read_u64(in);
  h.seed = read_u64(in);
  h.kind = read_u64(in);
  h.horizon = read_f64(in);
  return h;
}

}  // namespace

void write_dataset_binary(const std::string& path, const NoisedDataset& ds) {
  if (ds.schedule.kind() == ScheduleKind::strided)
    throw ConfigError("strided schedules cannot be stored in the dataset layout");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  write_header(out, ds.m(), ds.steps(), ds.d(), ds.seed, kind_code(ds.schedule.kind()),
               ds.schedule.horizon());
  const auto m = static_cast<Eigen::Index>(ds.m());
  const auto d = static_cast<Eigen::Index>(ds.d());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < d; ++k) write_f64(out, ds.x0(i, k));
  for (const auto* tensor : {&ds.x, &ds.z})
    for (Eigen::Index i = 0; i < m; ++i)
      for (const Mat& step : *tensor)
        for (Eigen::Index k = 0; k < d; ++k) write_f64(out, step(i, k));
}

NoisedDataset read_dataset_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  const Header h = read_header(in);
  if (h.n == 0) throw ConfigError(path + " holds samples, not a dataset");
  const ScheduleKind kind = h.kind == 1 ? ScheduleKind::quadratic : ScheduleKind::linear;
  NoisedDataset ds{Mat(h.m, h.d), std::vector<Mat>(h.n, Mat(h.m, h.d)),
                   std::vector<Mat>(h.n, Mat(h.m, h.d)), Schedule::make(kind, h.n, h.horizon),
                   h.seed, NoiseMode::markov};
  const auto m = static_cast<Eigen::Index>(h.m);
  const auto d = static_cast<Eigen::Index>(h.d);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < d; ++k) ds.x0(i, k) = read_f64(in);
  for (auto* tensor : {&ds.x, &ds.z})
    for (Eigen::Index i = 0; i < m; ++i)
      for (Mat& step : *tensor)
        for (Eigen::Index k = 0; k < d; ++k) step(i, k) = read_f64(in);
  return ds;
}

void write_samples_binary(const std::string& path, const Mat& samples, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  write_header(out, samples.rows(), 0, samples.cols(), seed, 0, 0.0);
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    for (Eigen::Index k = 0; k < samples.cols(); ++k) write_f64(out, samples(i, k));
}

Mat read_samples_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  const Header h = read_header(in);
  if (h.n != 0) throw ConfigError(path + " holds a dataset, not samples");
  Mat out(h.m, h.d);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index k = 0; k < out.cols(); ++k) out(i, k) = read_f64(in);
  return out;
}

void write_dataset_csv(std::ostream& out, const NoisedDataset& ds) {
  std::vector<std::string> header{"i", "j", "t"};
  for (std::size_t k = 0; k < ds.d(); ++k) header.push_back("x_" + std::to_string(k));
  for (std::size_t k = 0; k < ds.d(); ++k) header.push_back("z_" + std::to_string(k));
  CsvWriter csv(out, header);
  for (std::size_t i = 0; i < ds.m(); ++i) {
    for (std::size_t j = 0; j < ds.steps(); ++j) {
      csv.field(i).field(j + 1).field(ds.schedule.time(j));
      const auto row = static_cast<Eigen::Index>(i);
      for (Eigen::Index k = 0; k < ds.x[j].cols(); ++k) csv.field(ds.x[j](row, k));
      for (Eigen::Index k = 0; k < ds.z[j].cols(); ++k) csv.field(ds.z[j](row, k));
      csv.end_row();
    }
  }
}

void write_samples_csv(std::ostream& out, const Mat& samples) {
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) header.push_back("x_" + std::to_string(k));
  CsvWriter csv(out, header);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index k = 0; k < samples.cols(); ++k) csv.field(samples(i, k));
    csv.end_row();
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream hex;
  for (unsigned int b = 0; b < len; ++b)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[b]);
  return hex.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace scorelab
