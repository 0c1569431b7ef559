#include "qpsynth/ingest.hpp"

#include "qpsynth/errors.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace qpsynth {
namespace {

constexpr std::array<char, 4> kMagic = {'G', 'P', 'E', 'G'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <class T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view token, const std::string& where) {
  // strtod accepts "nan"/"inf", which must surface as DataError rather than FormatError.
  std::string tmp(token);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw FormatError("cannot parse number '" + tmp + "' " + where);
  }
  return v;
}

Recording load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty file " + path.string());
  auto header = trim(line);
  if (!header.starts_with("#")) throw FormatError("missing '# fs=' header in " + path.string());
  header = trim(header.substr(1));
  if (!header.starts_with("fs=")) throw FormatError("missing '# fs=' header in " + path.string());
  Recording rec;
  rec.fs = parse_double(trim(header.substr(3)), "in fs header");
  if (!(rec.fs > 0) || !std::isfinite(rec.fs)) throw FormatError("invalid sampling rate in header");

  if (!std::getline(in, line)) throw FormatError("missing channel label line in " + path.string());
  for (auto label : split_commas(trim(line))) {
    if (label.empty()) throw FormatError("empty channel label in " + path.string());
    rec.channel_labels.emplace_back(label);
  }
  const Index channels = static_cast<Index>(rec.channel_labels.size());

  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_commas(body);
    if (static_cast<Index>(fields.size()) != channels) {
      throw FormatError("row " + std::to_string(rows + 1) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(channels));
    }
    for (auto f : fields) values.push_back(parse_double(f, "at row " + std::to_string(rows + 1)));
    ++rows;
  }
  rec.data = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, channels);
  rec.validate();
  return rec;
}

Recording load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated header in " + path.string());
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("bad magic bytes in " + path.string());
  }
  const char* p = bytes.data() + 4;
  const auto version = get_le<std::uint32_t>(p);
  if (version != kBinaryVersion) {
    throw FormatError("unsupported binary version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint32_t>(p + 4);
  const auto cols = get_le<std::uint32_t>(p + 8);
  const auto fs = get_le<double>(p + 12);
  if (rows == 0 || cols == 0) throw DataError("recording has zero samples or channels");
  const std::uint64_t count = std::uint64_t{rows} * cols;
  if (bytes.size() != kHeaderBytes + count * sizeof(float)) {
    throw FormatError("payload size does not match header in " + path.string());
  }
  Recording rec;
  rec.fs = fs;
  rec.data.resize(rows, cols);
  const char* payload = bytes.data() + kHeaderBytes;
  for (std::uint32_t t = 0; t < rows; ++t) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      rec.data(t, c) = get_le<float>(payload + (std::uint64_t{t} * cols + c) * sizeof(float));
    }
  }
  rec.channel_labels = default_channel_labels(cols);
  rec.validate();
  return rec;
}

void save_csv(const Recording& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "# fs=" << rec.fs << '\n';
  for (std::size_t c = 0; c < rec.channel_labels.size(); ++c) {
    out << (c ? "," : "") << rec.channel_labels[c];
  }
  out << '\n';
  for (Index t = 0; t < rec.samples(); ++t) {
    for (Index c = 0; c < rec.channels(); ++c) out << (c ? "," : "") << rec.data(t, c);
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

void save_binary(const Recording& rec, const std::filesystem::path& path) {
  if (rec.samples() > std::numeric_limits<std::uint32_t>::max() ||
      rec.channels() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("recording too large for binary format");
  }
  std::string buf;
  buf.reserve(kHeaderBytes + static_cast<std::size_t>(rec.data.size()) * sizeof(float));
  buf.append(kMagic.data(), kMagic.size());
  put_le(buf, kBinaryVersion);
  put_le(buf, static_cast<std::uint32_t>(rec.samples()));
  put_le(buf, static_cast<std::uint32_t>(rec.channels()));
  put_le(buf, rec.fs);
  for (Index t = 0; t < rec.samples(); ++t) {
    for (Index c = 0; c < rec.channels(); ++c) put_le(buf, static_cast<float>(rec.data(t, c)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1
};

// Direct form II transposed with steady-state initial conditions for a
// step of height x[0].
void lfilter_inplace(const Biquad& f, std::vector<double>& x) {
  if (x.empty()) return;
  const double gain = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  double z1 = (f.b2 - f.a2 * gain) * x[0];
  double z0 = (f.b1 - f.a1 * gain) * x[0] + z1;
  for (double& v : x) {
    const double in = v;
    const double out = f.b0 * in + z0;
    z0 = f.b1 * in - f.a1 * out + z1;
    z1 = f.b2 * in - f.a2 * out;
    v = out;
  }
}

}  // namespace

void Recording::validate() const {
  if (data.rows() < 1 || data.cols() < 1) throw DataError("recording has zero samples or channels");
  if (!(fs > 0) || !std::isfinite(fs)) throw DataError("sampling rate must be positive and finite");
  if (!data.allFinite()) throw DataError("recording contains non-finite values");
  if (static_cast<Index>(channel_labels.size()) != data.cols()) {
    throw DataError("channel label count does not match channel count");
  }
}

std::vector<std::string> default_channel_labels(Index channels) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(channels));
  for (Index c = 0; c < channels; ++c) labels.push_back("ch" + std::to_string(c + 1));
  return labels;
}

FileFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::csv : FileFormat::raw_binary;
}

Recording load_recording(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::csv ? load_csv(path) : load_binary(path);
}

Recording load_recording(const std::filesystem::path& path) {
  return load_recording(path, format_from_path(path));
}

void save_recording(const Recording& rec, const std::filesystem::path& path, FileFormat format) {
  rec.validate();
  if (format == FileFormat::csv) {
    save_csv(rec, path);
  } else {
    save_binary(rec, path);
  }
}

void save_recording(const Recording& rec, const std::filesystem::path& path) {
  save_recording(rec, path, format_from_path(path));
}

Recording notch_filter(const Recording& rec, double f0, double q) {
  if (!(f0 > 0) || !(f0 < rec.fs / 2)) throw ParameterError("notch frequency must lie in (0, fs/2)");
  if (!(q > 0)) throw ParameterError("notch quality factor must be positive");

  const double w0 = 2.0 * std::numbers::pi * f0 / rec.fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const Biquad f{1.0 / a0, -2.0 * std::cos(w0) / a0, 1.0 / a0, -2.0 * std::cos(w0) / a0,
                 (1.0 - alpha) / a0};

  const Index n = rec.samples();
  // Odd extension long enough for the ring-down (about nine time constants).
  const auto ring = static_cast<Index>(std::ceil(3.0 * q * rec.fs / f0));
  const Index pad = std::min<Index>(n - 1, std::max<Index>(6, ring));

  Recording out = rec;
  std::vector<double> buf(static_cast<std::size_t>(n + 2 * pad));
  for (Index c = 0; c < rec.channels(); ++c) {
    const auto col = rec.data.col(c);
    for (Index i = 0; i < pad; ++i) buf[static_cast<std::size_t>(i)] = 2.0 * col(0) - col(pad - i);
    for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(pad + i)] = col(i);
    for (Index i = 0; i < pad; ++i) {
      buf[static_cast<std::size_t>(pad + n + i)] = 2.0 * col(n - 1) - col(n - 2 - i);
    }
    lfilter_inplace(f, buf);
    std::reverse(buf.begin(), buf.end());
    lfilter_inplace(f, buf);
    std::reverse(buf.begin(), buf.end());
    for (Index i = 0; i < n; ++i) out.data(i, c) = buf[static_cast<std::size_t>(pad + i)];
  }
  return out;
}

std::vector<Recording> segment(const Recording& rec, Index length, Index stride) {
  if (length < 1 || stride < 1) throw ParameterError("segment length and stride must be >= 1");
  std::vector<Recording> out;
  for (Index start = 0; start + length <= rec.samples(); start += stride) {
    Recording part;
    part.data = rec.data.middleRows(start, length);
    part.fs = rec.fs;
    part.channel_labels = rec.channel_labels;
    out.push_back(std::move(part));
  }
  return out;
}

std::pair<Recording, NormStats> zscore_normalize(const Recording& rec) {
  const auto count = static_cast<double>(rec.data.size());
  if (count < 2) throw DegenerateSignalError("normalization needs at least two values");
  const double mean = rec.data.mean();
  const double var = (rec.data.array() - mean).square().sum() / count;
  const double scale = std::max(1.0, rec.data.cwiseAbs().maxCoeff());
  if (!(var > 0) || std::sqrt(var) <= 1e-14 * scale) {
    throw DegenerateSignalError("cannot normalize a constant signal");
  }
  NormStats stats{mean, std::sqrt(var), NormScope::per_segment_global};
  Recording out = rec;
  out.data = (rec.data.array() - mean) / stats.std;
  return {std::move(out), stats};
}

Recording denormalize(const Recording& rec, const NormStats& stats) {
  if (!(stats.std > 0)) throw ParameterError("NormStats.std must be positive");
  Recording out = rec;
  out.data = rec.data.array() * stats.std + stats.mean;
  return out;
}

Recording concatenate(const std::vector<Recording>& parts) {
  if (parts.empty()) throw ParameterError("nothing to concatenate");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.channels() != parts.front().channels()) throw ShapeError("channel counts differ");
    if (p.fs != parts.front().fs) throw ShapeError("sampling rates differ");
    rows += p.samples();
  }
  Recording out;
  out.fs = parts.front().fs;
  out.channel_labels = parts.front().channel_labels;
  out.data.resize(rows, parts.front().channels());
  Index at = 0;
  for (const auto& p : parts) {
    out.data.middleRows(at, p.samples()) = p.data;
    at += p.samples();
  }
  return out;
}

}  // namespace qpsynth
