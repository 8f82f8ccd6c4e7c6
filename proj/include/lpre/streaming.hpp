#ifndef LPRE_STREAMING_HPP
#define LPRE_STREAMING_HPP

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lpre/error.hpp"
#include "lpre/estimators.hpp"
#include "lpre/inference.hpp"
#include "lpre/linalg.hpp"
#include "lpre/model.hpp"

namespace lpre {

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvOptions {
  std::string response;  // empty: first column
  bool intercept = true;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col, const std::string& where) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError,
                where + ": cannot parse '" + std::string(cell) + "' at row " + std::to_string(row) +
                    ", column " + std::to_string(col + 1),
                row);
  }
  return v;
}

}  // namespace detail

/// Reads the header of a CSV stream and resolves column roles.
class CsvLayout {
 public:
  CsvLayout() = default;
  CsvLayout(std::string_view header, const CsvOptions& opts, const std::string& where) {
    for (auto cell : detail::split_commas(header)) columns_.emplace_back(detail::trim(cell));
    if (columns_.size() < 1) throw Error(ErrorCode::ParseError, where + ": empty header");
    if (opts.response.empty()) {
      response_ = 0;
    } else {
      const auto it = std::find(columns_.begin(), columns_.end(), opts.response);
      if (it == columns_.end()) {
        throw Error(ErrorCode::ParseError, where + ": response column '" + opts.response + "' not in header");
      }
      response_ = static_cast<std::size_t>(it - columns_.begin());
    }
    intercept_ = opts.intercept;
    if (intercept_) names_.push_back("Intercept");
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c != response_) names_.push_back(columns_[c]);
    }
    if (names_.empty()) throw Error(ErrorCode::ParseError, where + ": no covariate columns and no intercept");
  }

  std::size_t width() const noexcept { return columns_.size(); }
  std::size_t p() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }

  /// Appends one parsed data row to `batch`; `row` is the 1-based data row.
  void append_row(std::string_view line, std::size_t row, Batch& batch, const std::string& where) const {
    const auto cells = detail::split_commas(line);
    if (cells.size() != columns_.size()) {
      throw Error(ErrorCode::InconsistentWidth,
                  where + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(columns_.size()),
                  row);
    }
    const double y = detail::parse_cell(cells[response_], row, response_, where);
    if (!(y > 0.0)) {
      throw Error(ErrorCode::NonPositiveResponse,
                  where + ": response " + detail::fmt_g(y) + " at row " + std::to_string(row), row);
    }
    if (intercept_) batch.x.push_back(1.0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c != response_) batch.x.push_back(detail::parse_cell(cells[c], row, c, where));
    }
    batch.y.push_back(y);
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> names_;
  std::size_t response_ = 0;
  bool intercept_ = true;
};

namespace detail {

inline bool getline_nonblank(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) return true;
  }
  return false;
}

}  // namespace detail

/// Parses a whole CSV stream into one batch.
inline Batch parse_csv(std::istream& in, const CsvOptions& opts, const std::string& where = "<csv>",
                       std::vector<std::string>* names = nullptr) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::getline_nonblank(in, line, line_no)) throw Error(ErrorCode::ParseError, where + ": missing header");
  const CsvLayout layout(line, opts, where);
  Batch b;
  b.p = layout.p();
  std::size_t row = 0;
  while (detail::getline_nonblank(in, line, line_no)) layout.append_row(line, ++row, b, where);
  if (b.y.empty()) throw Error(ErrorCode::ParseError, where + ": no data rows");
  if (names) *names = layout.names();
  return b;
}

inline Batch parse_csv(std::string_view text, const CsvOptions& opts, const std::string& where = "<csv>") {
  std::istringstream in{std::string(text)};
  return parse_csv(in, opts, where);
}

/**
 * A sequence of batches: one per CSV file of a directory (lexicographic
 * filename order), fixed-size chunks of one CSV file, or an in-memory
 * generator. Batches are produced on demand and never re-read.
 */
class BatchSource {
 public:
  enum class Kind { CsvDirectory, CsvSingleFileChunked, InMemory };
  using Generator = std::function<std::optional<Batch>()>;

  static BatchSource csv_directory(const std::filesystem::path& dir, CsvOptions opts) {
    BatchSource s(Kind::CsvDirectory, std::move(opts));
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
      throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") s.files_.push_back(entry.path());
    }
    std::sort(s.files_.begin(), s.files_.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    if (s.files_.empty()) throw Error(ErrorCode::IoError, "no .csv files in " + dir.string());
    return s;
  }

  static BatchSource csv_chunked(const std::filesystem::path& file, std::size_t chunk_size, CsvOptions opts) {
    if (chunk_size < 1) throw Error(ErrorCode::InvalidConfig, "chunk size must be >= 1");
    BatchSource s(Kind::CsvSingleFileChunked, std::move(opts));
    s.chunk_size_ = chunk_size;
    s.where_ = file.string();
    s.in_ = std::make_unique<std::ifstream>(file);
    if (!*s.in_) throw Error(ErrorCode::IoError, "cannot open " + file.string());
    std::string header;
    if (!detail::getline_nonblank(*s.in_, header, s.line_no_)) {
      throw Error(ErrorCode::ParseError, s.where_ + ": missing header");
    }
    s.layout_ = CsvLayout(header, s.opts_, s.where_);
    s.names_ = s.layout_.names();
    return s;
  }

  static BatchSource in_memory(Generator gen) {
    BatchSource s(Kind::InMemory, {});
    s.gen_ = std::move(gen);
    return s;
  }

  /// Picks the directory or chunked-file mode from what `path` is.
  static BatchSource open(const std::filesystem::path& path, std::size_t chunk_size, CsvOptions opts) {
    if (std::filesystem::is_directory(path)) return csv_directory(path, std::move(opts));
    if (chunk_size == 0) chunk_size = static_cast<std::size_t>(-1);
    return csv_chunked(path, chunk_size, std::move(opts));
  }

  Kind kind() const noexcept { return kind_; }

  /// Covariate names (Intercept first when enabled); known after the first batch.
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<Batch> next_batch() {
    switch (kind_) {
      case Kind::CsvDirectory: return next_file();
      case Kind::CsvSingleFileChunked: return next_chunk();
      case Kind::InMemory: {
        auto b = gen_();
        if (b) b->id = ++batch_id_;
        return b;
      }
    }
    return std::nullopt;
  }

 private:
  BatchSource(Kind kind, CsvOptions opts) : kind_(kind), opts_(std::move(opts)) {}

  std::optional<Batch> next_file() {
    if (file_index_ >= files_.size()) return std::nullopt;
    const auto& path = files_[file_index_++];
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::string> names;
    Batch b = parse_csv(in, opts_, path.string(), &names);
    if (names_.empty()) {
      names_ = names;
    } else if (names != names_) {
      throw Error(ErrorCode::InconsistentWidth, path.string() + ": header differs from the first file");
    }
    b.id = ++batch_id_;
    return b;
  }

  std::optional<Batch> next_chunk() {
    Batch b;
    b.p = layout_.p();
    std::string line;
    std::size_t rows = 0;
    while (rows < chunk_size_ && detail::getline_nonblank(*in_, line, line_no_)) {
      layout_.append_row(line, ++data_row_, b, where_);
      ++rows;
    }
    if (rows == 0) return std::nullopt;
    b.id = ++batch_id_;
    return b;
  }

  Kind kind_;
  CsvOptions opts_;
  std::vector<std::filesystem::path> files_;
  std::size_t file_index_ = 0;
  std::unique_ptr<std::ifstream> in_;
  CsvLayout layout_;
  std::string where_;
  std::size_t chunk_size_ = 0;
  std::size_t line_no_ = 0;
  std::size_t data_row_ = 0;
  Generator gen_;
  std::vector<std::string> names_;
  long long batch_id_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

using EstimatorState = std::variant<RenewableState, CeeState, CueeState>;

struct Checkpoint {
  EstimatorState state;
  std::vector<std::string> names;
};

inline Method state_method(const EstimatorState& s) {
  switch (s.index()) {
    case 0: return Method::Renewable;
    case 1: return Method::CEE;
    default: return Method::CUEE;
  }
}

namespace detail {

using nlohmann::json;

/// 17 significant digits round-trip every binary64 value exactly.
inline std::string encode_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double decode_double(const json& j) {
  if (!j.is_string()) throw Error(ErrorCode::ParseError, "checkpoint number must be a decimal string");
  const std::string& s = j.get_ref<const std::string&>();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
  return v;
}

inline json encode(std::span<const double> values) {
  json a = json::array();
  for (double v : values) a.push_back(encode_double(v));
  return a;
}

inline Vector decode_vector(const json& j, std::size_t p, const char* key) {
  if (!j.is_array() || j.size() != p) {
    throw Error(ErrorCode::InconsistentWidth, std::string("checkpoint field '") + key + "' has wrong length");
  }
  Vector v(p);
  for (std::size_t i = 0; i < p; ++i) v[i] = decode_double(j[i]);
  return v;
}

inline Matrix decode_matrix(const json& j, std::size_t p, const char* key) {
  if (!j.is_array() || j.size() != p * p) {
    throw Error(ErrorCode::InconsistentWidth, std::string("checkpoint field '") + key + "' has wrong length");
  }
  Matrix m(p);
  for (std::size_t k = 0; k < p * p; ++k) m.span()[k] = decode_double(j[k]);
  return m;
}

inline json encode_cee(const CeeState& s) {
  return json{{"beta", encode(s.beta.span())},
              {"q_agg", encode(s.q_agg.span())},
              {"v", encode(s.v.span())},
              {"n_total", s.n_total},
              {"batches_seen", s.batches_seen}};
}

inline CeeState decode_cee(const json& j, std::size_t p) {
  CeeState s;
  s.beta = decode_vector(j.at("beta"), p, "beta");
  s.q_agg = decode_matrix(j.at("q_agg"), p, "q_agg");
  s.v = decode_matrix(j.at("v"), p, "v");
  s.n_total = j.at("n_total").get<long long>();
  s.batches_seen = j.at("batches_seen").get<long long>();
  return s;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

/// Compact dump with sorted keys; the digest field is excluded by the caller.
inline std::string canonical(const json& doc) { return doc.dump(); }

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& cp) {
  using detail::encode;
  using nlohmann::json;
  json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["method"] = std::string(method_name(state_method(cp.state)));
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        doc["p"] = s.p();
        doc["batches_seen"] = s.batches_seen;
        doc["n_total"] = s.n_total;
        doc["beta"] = encode(s.beta.span());
        doc["q_agg"] = encode(s.q_agg.span());
        if constexpr (std::is_same_v<T, RenewableState>) {
          doc["c_agg"] = encode(s.c_agg.span());
        } else if constexpr (std::is_same_v<T, CeeState>) {
          doc["v"] = encode(s.v.span());
        } else {
          doc["v"] = encode(s.v.span());
          doc["qb_sum"] = encode(s.qb_sum.span());
          doc["s_sum"] = encode(s.s_sum.span());
          doc["cee"] = detail::encode_cee(s.cee_companion);
        }
      },
      cp.state);
  doc["names"] = cp.names;
  doc["digest"] = detail::sha256_hex(detail::canonical(doc));
  return doc;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& doc_in) {
  using detail::decode_matrix;
  using detail::decode_vector;
  try {
    if (!doc_in.is_object()) throw Error(ErrorCode::ParseError, "checkpoint is not a JSON object");
    const int version = doc_in.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(ErrorCode::VersionMismatch, "checkpoint format_version " + std::to_string(version) +
                                                  ", supported " + std::to_string(kCheckpointVersion));
    }
    nlohmann::json doc = doc_in;
    const std::string digest = doc.at("digest").get<std::string>();
    doc.erase("digest");
    if (detail::sha256_hex(detail::canonical(doc)) != digest) {
      throw Error(ErrorCode::DigestMismatch, "checkpoint content does not match its digest");
    }
    const std::size_t p = doc.at("p").get<std::size_t>();
    if (p == 0) throw Error(ErrorCode::InconsistentWidth, "checkpoint has p=0");
    const Method method = parse_method(doc.at("method").get<std::string>());
    Checkpoint cp;
    if (doc.contains("names")) cp.names = doc.at("names").get<std::vector<std::string>>();
    const long long batches = doc.at("batches_seen").get<long long>();
    const long long n_total = doc.at("n_total").get<long long>();
    const Vector beta = decode_vector(doc.at("beta"), p, "beta");
    const Matrix q_agg = decode_matrix(doc.at("q_agg"), p, "q_agg");
    switch (method) {
      case Method::Renewable:
        cp.state = RenewableState{beta, q_agg, decode_matrix(doc.at("c_agg"), p, "c_agg"), n_total, batches};
        break;
      case Method::CEE: cp.state = CeeState{beta, q_agg, decode_matrix(doc.at("v"), p, "v"), n_total, batches}; break;
      case Method::CUEE:
        cp.state = CueeState{beta,
                             q_agg,
                             decode_vector(doc.at("qb_sum"), p, "qb_sum"),
                             decode_vector(doc.at("s_sum"), p, "s_sum"),
                             decode_matrix(doc.at("v"), p, "v"),
                             detail::decode_cee(doc.at("cee"), p),
                             n_total,
                             batches};
        break;
      case Method::FullLPRE: throw Error(ErrorCode::MethodMismatch, "full-data fits have no streaming checkpoint");
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed checkpoint: ") + e.what());
  }
}

/// Writes to `<path>.tmp` then renames over `path`.
inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_json(cp).dump(2) + "\n";
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

template <class State>
void save_checkpoint(const State& state, const std::filesystem::path& path, std::vector<std::string> names = {}) {
  save_checkpoint(Checkpoint{EstimatorState{state}, std::move(names)}, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

/// Loads and checks the estimator kind, e.g. load_checkpoint_as<RenewableState>(path).
template <class State>
State load_checkpoint_as(const std::filesystem::path& path) {
  Checkpoint cp = load_checkpoint(path);
  if (auto* s = std::get_if<State>(&cp.state)) return std::move(*s);
  throw Error(ErrorCode::MethodMismatch, path.string() + " holds a " +
                                             std::string(method_name(state_method(cp.state))) + " checkpoint");
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

inline RenewableState update(const RenewableState& s, const Batch& b, const SolverConfig& cfg) {
  return renew_update(s, b, cfg);
}
inline CeeState update(const CeeState& s, const Batch& b, const SolverConfig& cfg) { return cee_update(s, b, cfg); }
inline CueeState update(const CueeState& s, const Batch& b, const SolverConfig& cfg) { return cuee_update(s, b, cfg); }

inline EstimatorState update(const EstimatorState& s, const Batch& b, const SolverConfig& cfg) {
  return std::visit([&](const auto& st) { return EstimatorState{update(st, b, cfg)}; }, s);
}

inline EstimatorState zero_state(Method m, std::size_t p) {
  switch (m) {
    case Method::Renewable: return RenewableState::zero(p);
    case Method::CEE: return CeeState::zero(p);
    case Method::CUEE: return CueeState::zero(p);
    case Method::FullLPRE: break;
  }
  throw Error(ErrorCode::MethodMismatch, "full-data LPRE is not a streaming method");
}

/**
 * Feeds every batch from `next` (a callable returning std::optional of a
 * Batch or something derived from it) into `state`. Only one batch is alive
 * at a time; `on_batch(state, batch)` runs after each update.
 */
template <class State, class Next, class OnBatch>
State process_stream(State state, Next&& next, const SolverConfig& cfg, OnBatch&& on_batch) {
  while (auto batch = next()) {
    const Batch& b = *batch;
    state = update(state, b, cfg);
    on_batch(static_cast<const State&>(state), b);
  }
  return state;
}

template <class State, class Next>
State process_stream(State state, Next&& next, const SolverConfig& cfg) {
  return process_stream(std::move(state), std::forward<Next>(next), cfg, [](const State&, const Batch&) {});
}

}  // namespace lpre

#endif  // LPRE_STREAMING_HPP
