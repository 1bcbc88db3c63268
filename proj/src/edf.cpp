#include "slimseiz/edf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "slimseiz/errors.hpp"

namespace slimseiz {

namespace {

constexpr std::size_t kGlobalHeaderBytes = 256;
constexpr std::size_t kPerSignalHeaderBytes = 256;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return c != ' '; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string field(std::span<const std::uint8_t> bytes, std::size_t offset,
                  std::size_t len) {
  return std::string(reinterpret_cast<const char*>(bytes.data()) + offset, len);
}

long parse_long(const std::string& raw, const char* what) {
  const std::string s = trim(raw);
  if (s.empty()) throw InvalidHeader(std::string("empty ") + what + " field");
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == nullptr || *end != '\0')
    throw InvalidHeader(std::string("malformed ") + what + " field: \"" + s + "\"");
  return v;
}

double parse_double(const std::string& raw, const char* what) {
  const std::string s = trim(raw);
  if (s.empty()) throw InvalidHeader(std::string("empty ") + what + " field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0' || !std::isfinite(v))
    throw InvalidHeader(std::string("malformed ") + what + " field: \"" + s + "\"");
  return v;
}

void put_field(std::vector<std::uint8_t>& out, std::size_t offset,
               std::size_t len, const std::string& text) {
  for (std::size_t i = 0; i < len; ++i)
    out[offset + i] =
        i < text.size() ? static_cast<std::uint8_t>(text[i]) : std::uint8_t(' ');
}

// Format a double into at most 8 ASCII characters, dropping precision until
// it fits. EDF numeric header fields are fixed 8-byte text.
std::string format8(double v) {
  char buf[32];
  for (int prec = 7; prec >= 1; --prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strlen(buf) <= 8) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.0e", v);
  if (std::strlen(buf) > 8) throw UnsupportedLayout("value does not fit an 8-byte field");
  return buf;
}

}  // namespace

EegRecording parse_edf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGlobalHeaderBytes)
    throw InvalidHeader("file shorter than the 256-byte global header");

  const std::string version = field(bytes, 0, 8);
  if (version != "0       ")
    throw InvalidHeader("unsupported version field \"" + trim(version) + "\"");

  const long header_bytes = parse_long(field(bytes, 184, 8), "header size");
  const long num_records = parse_long(field(bytes, 236, 8), "record count");
  const double record_duration_s =
      parse_double(field(bytes, 244, 8), "record duration");
  const long num_signals = parse_long(field(bytes, 252, 4), "signal count");

  if (num_signals < 1) throw InvalidHeader("signal count must be at least 1");
  if (num_records < 0) throw InvalidHeader("record count must be non-negative");
  if (record_duration_s <= 0.0)
    throw InvalidHeader("record duration must be positive");

  const std::size_t ns = static_cast<std::size_t>(num_signals);
  const std::size_t expected_header =
      kGlobalHeaderBytes + ns * kPerSignalHeaderBytes;
  if (static_cast<std::size_t>(header_bytes) != expected_header)
    throw InvalidHeader("declared header size " + std::to_string(header_bytes) +
                        " does not match " + std::to_string(expected_header) +
                        " for " + std::to_string(ns) + " signals");
  if (bytes.size() < expected_header)
    throw InvalidHeader("file shorter than the declared header");

  // Per-signal header fields are stored field-major: all labels, then all
  // transducers, and so on.
  std::size_t off = kGlobalHeaderBytes;
  const std::size_t off_labels = off;            off += ns * 16;
  off += ns * 80;                                // transducer type
  off += ns * 8;                                 // physical dimension
  const std::size_t off_phys_min = off;          off += ns * 8;
  const std::size_t off_phys_max = off;          off += ns * 8;
  const std::size_t off_dig_min = off;           off += ns * 8;
  const std::size_t off_dig_max = off;           off += ns * 8;
  off += ns * 80;                                // prefiltering
  const std::size_t off_spr = off;

  EegRecording rec;
  rec.channel_labels.resize(ns);
  std::vector<double> phys_min(ns), phys_max(ns), dig_min(ns), dig_max(ns);
  std::vector<long> spr(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    rec.channel_labels[s] = trim(field(bytes, off_labels + s * 16, 16));
    phys_min[s] = parse_double(field(bytes, off_phys_min + s * 8, 8), "physical min");
    phys_max[s] = parse_double(field(bytes, off_phys_max + s * 8, 8), "physical max");
    dig_min[s] = parse_double(field(bytes, off_dig_min + s * 8, 8), "digital min");
    dig_max[s] = parse_double(field(bytes, off_dig_max + s * 8, 8), "digital max");
    spr[s] = parse_long(field(bytes, off_spr + s * 8, 8), "samples per record");
    if (spr[s] < 1) throw InvalidHeader("samples per record must be positive");
    if (dig_max[s] <= dig_min[s])
      throw InvalidHeader("digital max must exceed digital min");
    if (phys_max[s] == phys_min[s])
      throw InvalidHeader("physical max must differ from physical min");
  }
  for (std::size_t s = 1; s < ns; ++s)
    if (spr[s] != spr[0])
      throw UnsupportedLayout("signals disagree on samples per record; a "
                              "uniform sampling rate is required");

  const std::size_t records = static_cast<std::size_t>(num_records);
  const std::size_t samples_per_record = static_cast<std::size_t>(spr[0]);
  const std::size_t record_bytes = ns * samples_per_record * 2;
  const std::size_t needed = expected_header + records * record_bytes;
  if (bytes.size() < needed)
    throw TruncatedData("data section holds " +
                        std::to_string(bytes.size() - expected_header) +
                        " bytes but " + std::to_string(records) +
                        " records need " +
                        std::to_string(records * record_bytes));

  rec.sample_rate_hz = static_cast<double>(samples_per_record) / record_duration_s;
  const std::size_t total_samples = records * samples_per_record;
  rec.samples.assign(ns, std::vector<float>(total_samples));

  std::vector<double> gain(ns);
  for (std::size_t s = 0; s < ns; ++s)
    gain[s] = (phys_max[s] - phys_min[s]) / (dig_max[s] - dig_min[s]);

  const std::uint8_t* p = bytes.data() + expected_header;
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t s = 0; s < ns; ++s) {
      float* dst = rec.samples[s].data() + r * samples_per_record;
      for (std::size_t i = 0; i < samples_per_record; ++i) {
        const std::uint16_t lo = p[0];
        const std::uint16_t hi = p[1];
        p += 2;
        const std::int16_t digital =
            static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        dst[i] = static_cast<float>(
            phys_min[s] + (static_cast<double>(digital) - dig_min[s]) * gain[s]);
      }
    }
  }
  return rec;
}

EegRecording parse_edf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open EDF file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_edf(bytes);
}

std::vector<std::uint8_t> write_edf(const EegRecording& rec) {
  rec.validate();
  const double rate = rec.sample_rate_hz;
  if (rate <= 0.0 || std::abs(rate - std::round(rate)) > 1e-9)
    throw UnsupportedLayout("EDF export needs an integral sample rate");
  const std::size_t ns = rec.num_channels();
  const std::size_t spr = static_cast<std::size_t>(std::llround(rate));
  const std::size_t n = rec.num_samples();
  const std::size_t records = (n + spr - 1) / spr;

  constexpr double kDigMin = -32768.0;
  constexpr double kDigMax = 32767.0;
  std::vector<double> phys_min(ns), phys_max(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    float lo = rec.samples[s].empty() ? 0.0f : rec.samples[s][0];
    float hi = lo;
    for (float v : rec.samples[s]) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double range = static_cast<double>(hi) - static_cast<double>(lo);
    if (range <= 0.0) range = 1.0;
    // Widen, then round-trip through the 8-char text fields so digitization
    // uses exactly the calibration a reader will see.
    const double margin = 1e-3 * range;
    phys_min[s] = parse_double(format8(lo - margin), "physical min");
    phys_max[s] = parse_double(format8(hi + margin), "physical max");
    if (phys_min[s] > lo || phys_max[s] < hi || phys_min[s] >= phys_max[s])
      throw UnsupportedLayout("physical range not representable in 8-byte fields");
  }

  const std::size_t header_bytes =
      kGlobalHeaderBytes + ns * kPerSignalHeaderBytes;
  std::vector<std::uint8_t> out(header_bytes + records * ns * spr * 2,
                                std::uint8_t(' '));

  put_field(out, 0, 8, "0");
  put_field(out, 8, 80, "X X X X");
  put_field(out, 88, 80, "Startdate X X X X");
  put_field(out, 168, 8, "01.01.00");
  put_field(out, 176, 8, "00.00.00");
  put_field(out, 184, 8, std::to_string(header_bytes));
  put_field(out, 192, 44, "");
  put_field(out, 236, 8, std::to_string(records));
  put_field(out, 244, 8, "1");
  put_field(out, 252, 4, std::to_string(ns));

  std::size_t off = kGlobalHeaderBytes;
  for (std::size_t s = 0; s < ns; ++s)
    put_field(out, off + s * 16, 16, rec.channel_labels[s].substr(0, 16));
  off += ns * 16;
  off += ns * 80;  // transducer type: blank
  for (std::size_t s = 0; s < ns; ++s) put_field(out, off + s * 8, 8, "uV");
  off += ns * 8;
  for (std::size_t s = 0; s < ns; ++s)
    put_field(out, off + s * 8, 8, format8(phys_min[s]));
  off += ns * 8;
  for (std::size_t s = 0; s < ns; ++s)
    put_field(out, off + s * 8, 8, format8(phys_max[s]));
  off += ns * 8;
  for (std::size_t s = 0; s < ns; ++s) put_field(out, off + s * 8, 8, "-32768");
  off += ns * 8;
  for (std::size_t s = 0; s < ns; ++s) put_field(out, off + s * 8, 8, "32767");
  off += ns * 8;
  off += ns * 80;  // prefiltering: blank
  for (std::size_t s = 0; s < ns; ++s)
    put_field(out, off + s * 8, 8, std::to_string(spr));
  off += ns * 8;
  off += ns * 32;  // reserved

  std::uint8_t* p = out.data() + header_bytes;
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& row = rec.samples[s];
      const double gain =
          (kDigMax - kDigMin) / (phys_max[s] - phys_min[s]);
      for (std::size_t i = 0; i < spr; ++i) {
        const std::size_t idx = r * spr + i;
        const double v = row.empty()
                             ? 0.0
                             : static_cast<double>(row[std::min(idx, n - 1)]);
        double d = std::round((v - phys_min[s]) * gain + kDigMin);
        d = std::clamp(d, kDigMin, kDigMax);
        const std::int16_t digital = static_cast<std::int16_t>(d);
        const std::uint16_t u = static_cast<std::uint16_t>(digital);
        p[0] = static_cast<std::uint8_t>(u & 0xFF);
        p[1] = static_cast<std::uint8_t>(u >> 8);
        p += 2;
      }
    }
  }
  return out;
}

void write_edf_file(const std::string& path, const EegRecording& rec) {
  const std::vector<std::uint8_t> bytes = write_edf(rec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing: " + path);
}

}  // namespace slimseiz
