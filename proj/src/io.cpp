#include "dynbps/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace dynbps {

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_metadata_line(std::ostream& out, const OutputMeta& meta) {
  out << "# dynbps version=" << kVersion << " command=" << meta.command << " seed=" << meta.seed
      << " config_hash=" << (meta.config_hash.empty() ? "none" : meta.config_hash) << '\n';
}

CsvWriter::CsvWriter(std::ostream& out, const OutputMeta& meta, const std::vector<std::string>& header)
    : out_(out), columns_(header.size()) {
  write_metadata_line(out_, meta);
  for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
  out_ << '\n';
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (in_row_++) out_ << ',';
  out_ << s;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_number(v)); }

CsvWriter& CsvWriter::field(long long v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  require(in_row_ == columns_, ErrorKind::InputError,
          "csv writer: row has " + std::to_string(in_row_) + " fields, header has " +
              std::to_string(columns_));
  out_ << '\n';
  in_row_ = 0;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvSource {
  std::istream& in;
  std::string name;
  int line_no = 0;

  // Next non-blank, non-comment line; false at end of input.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      fields = split(t);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(ErrorKind kind, const std::string& message) const {
    throw Error(kind, name + ": line " + std::to_string(line_no) + ": " + message);
  }

  double number(const std::vector<std::string>& f, std::size_t col, const std::vector<std::string>& header) const {
    const std::string& s = f[col];
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
      throw Error(ErrorKind::ParseError, name + ": line " + std::to_string(line_no) + ", column " +
                                             std::to_string(col + 1) + " (" + header[col] +
                                             "): cannot parse '" + s + "' as a finite number");
    return v;
  }
};

// Orders ids with embedded numbers naturally: s2 < s10.
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
      nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

// Counts a run of prefix_1..prefix_k columns starting at `start`.
std::size_t numbered_run(const std::vector<std::string>& header, std::size_t start, const std::string& prefix) {
  std::size_t k = 0;
  while (start + k < header.size() && header[start + k] == prefix + std::to_string(k + 1)) ++k;
  return k;
}

struct Cell {
  int line;
  std::vector<double> y, x;
};

}  // namespace

SpatioTemporalDataset read_panel(std::istream& in, const std::string& source, int first_time) {
  CsvSource src{in, source};
  std::vector<std::string> header;
  if (!src.next(header)) src.fail(ErrorKind::SchemaError, "empty file, expected a header row");
  const std::vector<std::string> fixed{"time", "location_id", "lon", "lat"};
  for (std::size_t k = 0; k < fixed.size(); ++k)
    if (k >= header.size() || header[k] != fixed[k])
      src.fail(ErrorKind::SchemaError, "header column " + std::to_string(k + 1) + " must be '" + fixed[k] +
                                           "'" + (k < header.size() ? ", found '" + header[k] + "'" : ""));
  const std::size_t q = numbered_run(header, 4, "y_");
  if (q == 0) src.fail(ErrorKind::SchemaError, "header needs at least one outcome column y_1");
  const std::size_t p = numbered_run(header, 4 + q, "x_");
  if (4 + q + p != header.size())
    src.fail(ErrorKind::SchemaError, "unexpected header column " + std::to_string(4 + q + p + 1) + " '" +
                                         header[4 + q + p] + "' (expected y_k or x_k)");

  std::map<std::string, std::pair<double, double>> coords;
  std::map<std::string, int> coord_line;
  std::map<std::pair<int, std::string>, Cell> cells;
  int max_time = 0;
  std::vector<std::string> f;
  while (src.next(f)) {
    if (f.size() != header.size())
      src.fail(ErrorKind::SchemaError, "expected " + std::to_string(header.size()) + " fields, found " +
                                           std::to_string(f.size()));
    const double tv = src.number(f, 0, header);
    if (tv < 1 || tv != std::floor(tv) || tv > 1e9)
      throw Error(ErrorKind::ParseError, source + ": line " + std::to_string(src.line_no) +
                                             ", column 1 (time): time must be a positive integer, got '" +
                                             f[0] + "'");
    const int t = static_cast<int>(tv);
    const std::string& id = f[1];
    if (id.empty())
      throw Error(ErrorKind::ParseError,
                  source + ": line " + std::to_string(src.line_no) + ", column 2 (location_id): empty id");
    const double lon = src.number(f, 2, header), lat = src.number(f, 3, header);
    auto [it, fresh] = coords.emplace(id, std::make_pair(lon, lat));
    if (fresh) {
      coord_line[id] = src.line_no;
    } else if (it->second != std::make_pair(lon, lat)) {
      src.fail(ErrorKind::GridError, "location " + id + " has coordinates different from line " +
                                         std::to_string(coord_line[id]));
    }
    Cell cell{src.line_no, {}, {}};
    for (std::size_t k = 0; k < q; ++k) cell.y.push_back(src.number(f, 4 + k, header));
    for (std::size_t k = 0; k < p; ++k) cell.x.push_back(src.number(f, 4 + q + k, header));
    const auto key = std::make_pair(t, id);
    if (auto prev = cells.find(key); prev != cells.end())
      src.fail(ErrorKind::GridError, "duplicated cell (time=" + std::to_string(t) + ", location=" + id +
                                         "), first seen at line " + std::to_string(prev->second.line));
    cells.emplace(key, std::move(cell));
    max_time = std::max(max_time, t);
  }
  if (cells.empty()) src.fail(ErrorKind::GridError, "panel has no data rows");
  if (const int lo = cells.begin()->first.first; lo < first_time)
    throw Error(ErrorKind::GridError, source + ": time " + std::to_string(lo) + " precedes the first expected time " +
                                          std::to_string(first_time));

  std::vector<std::string> ids;
  for (const auto& [id, xy] : coords) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), natural_less);
  const auto n = static_cast<Index>(ids.size());

  SpatioTemporalDataset data;
  data.locations.ids = ids;
  data.locations.coords.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    const auto& xy = coords[ids[static_cast<std::size_t>(i)]];
    data.locations.coords.row(i) << xy.first, xy.second;
  }
  for (int t = first_time; t <= max_time; ++t) {
    Matrix y(n, static_cast<Index>(q)), x(n, static_cast<Index>(p));
    for (Index i = 0; i < n; ++i) {
      const auto& id = ids[static_cast<std::size_t>(i)];
      auto it = cells.find({t, id});
      if (it == cells.end())
        throw Error(ErrorKind::GridError,
                    source + ": missing cell (time=" + std::to_string(t) + ", location=" + id + ")");
      for (std::size_t k = 0; k < q; ++k) y(i, static_cast<Index>(k)) = it->second.y[k];
      for (std::size_t k = 0; k < p; ++k) x(i, static_cast<Index>(k)) = it->second.x[k];
    }
    data.Y.push_back(std::move(y));
    data.X.push_back(std::move(x));
  }
  data.validate();
  return data;
}

SpatioTemporalDataset ingest_panel(const std::string& path, int first_time) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::InputError, "cannot open panel file '" + path + "'");
  return read_panel(in, path, first_time);
}

void emit_panel(std::ostream& out, const SpatioTemporalDataset& data, const OutputMeta& meta,
                int first_time) {
  std::vector<std::string> header{"time", "location_id", "lon", "lat"};
  for (Index k = 0; k < data.q(); ++k) header.push_back("y_" + std::to_string(k + 1));
  for (Index k = 0; k < data.p(); ++k) header.push_back("x_" + std::to_string(k + 1));
  CsvWriter w(out, meta, header);
  for (int t = 0; t < data.T(); ++t)
    for (Index i = 0; i < data.n(); ++i) {
      w.field(first_time + t).field(data.locations.ids[static_cast<std::size_t>(i)]);
      w.field(data.locations.coords(i, 0)).field(data.locations.coords(i, 1));
      for (Index k = 0; k < data.q(); ++k) w.field(data.Y[static_cast<std::size_t>(t)](i, k));
      for (Index k = 0; k < data.p(); ++k) w.field(data.X[static_cast<std::size_t>(t)](i, k));
      w.end_row();
    }
}

LocationFile read_locations(std::istream& in, const std::string& source) {
  CsvSource src{in, source};
  std::vector<std::string> header;
  if (!src.next(header)) src.fail(ErrorKind::SchemaError, "empty file, expected a header row");
  const std::vector<std::string> fixed{"location_id", "lon", "lat"};
  for (std::size_t k = 0; k < fixed.size(); ++k)
    if (k >= header.size() || header[k] != fixed[k])
      src.fail(ErrorKind::SchemaError, "header column " + std::to_string(k + 1) + " must be '" + fixed[k] + "'");
  const std::size_t p = numbered_run(header, 3, "x_");
  if (3 + p != header.size())
    src.fail(ErrorKind::SchemaError, "unexpected header column '" + header[3 + p] + "' (expected x_k)");
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  std::vector<std::string> f;
  while (src.next(f)) {
    if (f.size() != header.size())
      src.fail(ErrorKind::SchemaError, "expected " + std::to_string(header.size()) + " fields, found " +
                                           std::to_string(f.size()));
    if (f[0].empty())
      throw Error(ErrorKind::ParseError,
                  source + ": line " + std::to_string(src.line_no) + ", column 1 (location_id): empty id");
    if (!seen.insert(f[0]).second) src.fail(ErrorKind::GridError, "duplicated location " + f[0]);
    std::vector<double> row;
    for (std::size_t k = 1; k < header.size(); ++k) row.push_back(src.number(f, k, header));
    ids.push_back(f[0]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) src.fail(ErrorKind::GridError, "no locations");
  LocationFile out;
  const auto m = static_cast<Index>(rows.size());
  out.locations.ids = ids;
  out.locations.coords.resize(m, 2);
  out.design.resize(m, static_cast<Index>(p));
  for (Index i = 0; i < m; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    out.locations.coords.row(i) << r[0], r[1];
    for (std::size_t k = 0; k < p; ++k) out.design(i, static_cast<Index>(k)) = r[2 + k];
  }
  return out;
}

LocationFile ingest_locations(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::InputError, "cannot open locations file '" + path + "'");
  return read_locations(in, path);
}

// ---------------------------------------------------------------------------
// Fit archive

namespace {

constexpr char kMagic[8] = {'D', 'Y', 'N', 'B', 'P', 'S', 'F', 'T'};
constexpr std::uint32_t kArchiveVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename M>
  void mat(const M& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) pod(m(r, c));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto len = pod<std::uint64_t>();
    require(len < (1ULL << 32), ErrorKind::ParseError, "fit archive: corrupt string length");
    std::string s(len, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(len));
    check();
    return s;
  }
  template <typename Scalar = double>
  Mat<Scalar> mat() {
    const auto rows = pod<std::int64_t>(), cols = pod<std::int64_t>();
    require(rows >= 0 && cols >= 0 && rows * cols < (1LL << 34), ErrorKind::ParseError,
            "fit archive: corrupt matrix shape");
    Mat<Scalar> m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = pod<Scalar>();
    return m;
  }

 private:
  void check() {
    require(static_cast<bool>(in_), ErrorKind::ParseError, "fit archive: truncated file");
  }
  std::istream& in_;
};

}  // namespace

void write_fit(std::ostream& out, const FitResult& fit) {
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kArchiveVersion);
  w.pod<std::int64_t>(fit.grid.size());
  for (const auto& m : fit.grid.models) {
    w.pod(m.alpha);
    w.pod(m.phi);
    w.str(m.label);
  }
  w.pod<std::int64_t>(fit.n());
  for (const auto& id : fit.locations.ids) w.str(id);
  w.mat(fit.locations.coords);
  w.mat(fit.prior.m0);
  w.mat(fit.prior.C0);
  w.pod(fit.prior.nu0);
  w.mat(fit.prior.Psi0);
  const auto& o = fit.options;
  w.pod<std::int32_t>(o.aggregation == Aggregation::Global ? 0 : 1);
  w.pod(o.coef_state_scale);
  w.pod<std::int32_t>(o.initial_weights ? 1 : 0);
  w.mat(o.initial_weights ? Matrix(*o.initial_weights) : Matrix());
  w.pod(o.solver.tol);
  w.pod<std::int32_t>(o.solver.max_iter);
  w.pod<std::int32_t>(o.freeze_model ? 1 : 0);
  w.pod<std::int32_t>(o.forecast_mode == ForecastMode::Conditional ? 0 : 1);
  w.pod(o.max_jitter);
  w.pod<std::int64_t>(fit.p);
  w.pod<std::int64_t>(fit.q);
  w.pod<std::int32_t>(fit.T);
  for (const auto& flow : fit.states) {
    require(static_cast<int>(flow.size()) == fit.T + 1, ErrorKind::InputError,
            "fit archive: every flow needs T + 1 states");
    for (const auto& st : flow) {
      w.pod<std::int32_t>(st.t);
      w.mat(st.m);
      w.mat(st.C);
      w.pod(st.nu);
      w.mat(st.Psi);
    }
  }
  for (const auto& pl : fit.weights.per_location) w.mat(pl);
  w.mat(fit.weights.global);
  w.mat(fit.weights.consensus);
  w.mat(fit.weights.counts);
  w.pod<std::int64_t>(fit.history.steps());
  for (const auto& s : fit.history.all_steps()) w.mat(s);
  require(static_cast<bool>(out), ErrorKind::InputError, "fit archive: write failed");
}

FitResult read_fit(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  require(static_cast<bool>(in) && std::memcmp(magic, kMagic, sizeof kMagic) == 0, ErrorKind::ParseError,
          "fit archive: not a dynbps fit file");
  Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  require(version == kArchiveVersion, ErrorKind::ParseError,
          "fit archive: unsupported version " + std::to_string(version));
  FitResult fit;
  const auto J = r.pod<std::int64_t>();
  require(J >= 1 && J < 100000, ErrorKind::ParseError, "fit archive: corrupt model count");
  for (std::int64_t j = 0; j < J; ++j) {
    CandidateModel m;
    m.alpha = r.pod<double>();
    m.phi = r.pod<double>();
    m.label = r.str();
    fit.grid.models.push_back(std::move(m));
  }
  const auto n = r.pod<std::int64_t>();
  require(n >= 1 && n < 10000000, ErrorKind::ParseError, "fit archive: corrupt location count");
  for (std::int64_t i = 0; i < n; ++i) fit.locations.ids.push_back(r.str());
  fit.locations.coords = r.mat();
  fit.prior.m0 = r.mat();
  fit.prior.C0 = r.mat();
  fit.prior.nu0 = r.pod<double>();
  fit.prior.Psi0 = r.mat();
  auto& o = fit.options;
  o.aggregation = r.pod<std::int32_t>() == 0 ? Aggregation::Global : Aggregation::Consensus;
  o.coef_state_scale = r.pod<double>();
  const bool has_w0 = r.pod<std::int32_t>() != 0;
  Matrix w0 = r.mat();
  if (has_w0) o.initial_weights = Vector(w0.col(0));
  o.solver.tol = r.pod<double>();
  o.solver.max_iter = r.pod<std::int32_t>();
  o.freeze_model = r.pod<std::int32_t>() != 0;
  o.forecast_mode = r.pod<std::int32_t>() == 0 ? ForecastMode::Conditional : ForecastMode::Marginal;
  o.max_jitter = r.pod<double>();
  fit.p = r.pod<std::int64_t>();
  fit.q = r.pod<std::int64_t>();
  fit.T = r.pod<std::int32_t>();
  require(fit.T >= 1 && fit.T < 10000000, ErrorKind::ParseError, "fit archive: corrupt time count");
  fit.states.resize(static_cast<std::size_t>(J));
  for (auto& flow : fit.states)
    for (int t = 0; t <= fit.T; ++t) {
      FilterState<double> st;
      st.t = r.pod<std::int32_t>();
      st.m = r.mat();
      st.C = r.mat();
      st.nu = r.pod<double>();
      st.Psi = r.mat();
      flow.push_back(std::move(st));
    }
  for (int t = 0; t <= fit.T; ++t) fit.weights.per_location.push_back(r.mat());
  fit.weights.global = r.mat();
  fit.weights.consensus = r.mat();
  fit.weights.counts = r.mat<int>();
  fit.history = LogDensityHistory(J, n);
  const auto steps = r.pod<std::int64_t>();
  require(steps >= 0 && steps <= fit.T, ErrorKind::ParseError, "fit archive: corrupt history length");
  for (std::int64_t k = 0; k < steps; ++k) fit.history.append(r.mat());
  return fit;
}

void save_fit(const FitResult& fit, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::InputError, "cannot write fit archive '" + path + "'");
  write_fit(out, fit);
}

FitResult load_fit(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::InputError, "cannot open fit archive '" + path + "'");
  return read_fit(in);
}

}  // namespace dynbps
