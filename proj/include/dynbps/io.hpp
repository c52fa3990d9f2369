#ifndef DYNBPS_IO_HPP
#define DYNBPS_IO_HPP

// CSV panels, location files, output writers and the binary fit archive.
// Formats are described in docs/formats.md.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynbps/engine.hpp"

namespace dynbps {

inline constexpr const char* kVersion = "0.1.0";

/// Provenance written as the first line of every output file.
struct OutputMeta {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;  // 16 hex digits
};

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string content_hash(const std::string& text);

/// "%.12g"; NaN prints as "nan".
std::string format_number(double v);

/// Long-format panel: time,location_id,lon,lat,y_1..y_q,x_1..x_p.
/// Rows may come in any order.
/// Times must run contiguously from `first_time`; the returned slices are
/// indexed from 0 at `first_time`.
SpatioTemporalDataset read_panel(std::istream& in, const std::string& source = "<panel>", int first_time = 1);
SpatioTemporalDataset ingest_panel(const std::string& path, int first_time = 1);

/// Rows sorted by (time, location order of the dataset). `first_time` labels
/// the first matrix.
void emit_panel(std::ostream& out, const SpatioTemporalDataset& data, const OutputMeta& meta,
                int first_time = 1);

/// location_id,lon,lat,x_1..x_p (design columns optional when p = 0).
struct LocationFile {
  LocationSet<double> locations;
  Matrix design;  // m x p
};
LocationFile read_locations(std::istream& in, const std::string& source = "<locations>");
LocationFile ingest_locations(const std::string& path);

/// Small CSV writer that emits the metadata comment line and the header.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const OutputMeta& meta, const std::vector<std::string>& header);
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(Index v) { return field(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ostream& out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

void write_metadata_line(std::ostream& out, const OutputMeta& meta);

/// Binary archive of a FitResult (filter states, weight trace, history).
void save_fit(const FitResult& fit, const std::string& path);
FitResult load_fit(const std::string& path);
void write_fit(std::ostream& out, const FitResult& fit);
FitResult read_fit(std::istream& in);

}  // namespace dynbps

#endif  // DYNBPS_IO_HPP
