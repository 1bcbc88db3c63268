#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slimseiz/eeg.hpp"

namespace slimseiz {

// EDF layout: a 256-byte global header (8-byte version "0", 80-byte patient
// and recording ids, start date "dd.mm.yy", start time "hh.mm.ss", 8-byte
// header-bytes count, 44 reserved, 8-byte record count, 8-byte record
// duration in seconds, 4-byte signal count), then field-major per-signal
// headers of 256 bytes per signal (16-byte label, 80-byte transducer, 8-byte
// physical dimension, 8-byte physical min/max, 8-byte digital min/max,
// 80-byte prefiltering, 8-byte samples-per-record, 32 reserved), then data
// records of little-endian signed 16-bit samples, record-major and
// signal-major within each record.
//
// Digital-to-physical calibration per signal:
//   physical = physical_min
//            + (digital - digital_min) * (physical_max - physical_min)
//                                      / (digital_max - digital_min)
//
// Throws InvalidHeader for a bad version field or inconsistent declared
// sizes, TruncatedData when the data section is shorter than the declared
// record count, and UnsupportedLayout when signals disagree on
// samples-per-record (a single uniform rate is required). Annotations are
// not read from the stream; they come from the sidecar CSV.
EegRecording parse_edf(std::span<const std::uint8_t> bytes);
EegRecording parse_edf_file(const std::string& path);

// Inverse of parse_edf, for round-trip checks and synthetic exports. Emits
// one data record per second, so the sample rate must be a positive integer;
// a trailing partial second is padded by repeating each channel's last
// sample. Calibration is per channel from the observed value range, widened
// by 0.1% so the 8-character header fields always bracket the data. Values
// re-parse within one digital quantum.
std::vector<std::uint8_t> write_edf(const EegRecording& rec);
void write_edf_file(const std::string& path, const EegRecording& rec);

}  // namespace slimseiz
