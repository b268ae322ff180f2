#include "procal/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "procal/error.hpp"

namespace procal {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary embedding I/O assumes a little-endian host");

constexpr char kEmbeddingMagic[8] = {'P', 'R', 'O', 'C', 'A', 'L', 'E', 'M'};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string row_context(std::size_t line_no) { return " (line " + std::to_string(line_no) + ")"; }

template <typename T>
T parse_integer(std::string_view field, std::size_t line_no) {
  field = trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kMalformedRow,
                "expected integer, got '" + std::string(field) + "'" + row_context(line_no));
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line_no) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec == std::errc::result_out_of_range) {
    throw Error(ErrorCode::kNonFinite, "value out of double range" + row_context(line_no));
  }
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kMalformedRow,
                "expected number, got '" + std::string(field) + "'" + row_context(line_no));
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFinite, "non-finite value" + row_context(line_no));
  }
  return value;
}

void append_real(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

template <typename T>
void append_integer(std::string& out, T value) {
  char buf[24];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

void check_unique_ids(std::span<const std::int64_t> ids) {
  std::unordered_set<std::int64_t> seen;
  seen.reserve(ids.size());
  for (auto id : ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate id " + std::to_string(id));
    }
  }
}

template <typename T>
T read_le(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

bool looks_numeric(std::string_view field) {
  field = trim(field);
  if (field.empty()) return false;
  char c = field.front();
  return (c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.';
}

}  // namespace

std::vector<std::uint8_t> PredictionSet::correctness() const {
  std::vector<std::uint8_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = is_correct(i) ? 1 : 0;
  return out;
}

PredictionSet PredictionSet::subset(std::span<const std::size_t> rows) const {
  PredictionSet out;
  out.num_classes = num_classes;
  out.sample_id.reserve(rows.size());
  out.true_label.reserve(rows.size());
  out.pred_label.reserve(rows.size());
  out.confidence.reserve(rows.size());
  if (has_logits()) out.logits.reserve(rows.size() * static_cast<std::size_t>(num_classes));
  for (std::size_t r : rows) {
    out.sample_id.push_back(sample_id[r]);
    out.true_label.push_back(true_label[r]);
    out.pred_label.push_back(pred_label[r]);
    out.confidence.push_back(confidence[r]);
    if (has_logits()) {
      auto row = logit_row(r);
      out.logits.insert(out.logits.end(), row.begin(), row.end());
    }
  }
  return out;
}

EmbeddingMatrix EmbeddingMatrix::subset(std::span<const std::size_t> rows) const {
  EmbeddingMatrix out;
  out.dim = dim;
  out.values.reserve(rows.size() * dim);
  out.sample_id.reserve(rows.size());
  for (std::size_t r : rows) {
    auto values_row = row(r);
    out.values.insert(out.values.end(), values_row.begin(), values_row.end());
    out.sample_id.push_back(sample_id[r]);
  }
  return out;
}

SoftmaxResult softmax_confidence(std::span<const double> logits) {
  require(logits.size() >= 2, ErrorCode::kInvalidArgument, "softmax needs at least 2 classes");
  std::size_t best = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (!std::isfinite(logits[c])) throw Error(ErrorCode::kNonFinite, "non-finite logit");
    if (logits[c] > logits[best]) best = c;
  }
  const double top = logits[best];
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - top);
  return {static_cast<int>(best), 1.0 / denom};
}

void validate(const PredictionSet& preds) {
  const std::size_t n = preds.size();
  require(n >= 1, ErrorCode::kInsufficientData, "prediction set is empty");
  require(preds.num_classes >= 2, ErrorCode::kInvalidArgument, "need at least 2 classes");
  require(preds.true_label.size() == n && preds.pred_label.size() == n &&
              preds.confidence.size() == n,
          ErrorCode::kInvalidArgument, "prediction arrays differ in length");
  require(!preds.has_logits() ||
              preds.logits.size() == n * static_cast<std::size_t>(preds.num_classes),
          ErrorCode::kInvalidArgument, "logit matrix has wrong shape");
  for (std::size_t i = 0; i < n; ++i) {
    const double conf = preds.confidence[i];
    if (!std::isfinite(conf)) throw Error(ErrorCode::kNonFinite, "non-finite confidence");
    if (!(conf > 0.0 && conf <= 1.0)) {
      throw Error(ErrorCode::kValueOutOfRange,
                  "confidence outside (0,1] for id " + std::to_string(preds.sample_id[i]));
    }
    for (int label : {preds.true_label[i], preds.pred_label[i]}) {
      if (label < 0 || label >= preds.num_classes) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    "label out of range for id " + std::to_string(preds.sample_id[i]));
      }
    }
  }
  check_unique_ids(preds.sample_id);
}

void validate(const EmbeddingMatrix& embs) {
  require(embs.dim >= 1, ErrorCode::kInvalidArgument, "embedding dimension must be >= 1");
  require(embs.values.size() == embs.rows() * embs.dim, ErrorCode::kPayloadLengthMismatch,
          "embedding values do not match n x d");
  for (float v : embs.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite embedding value");
  }
  check_unique_ids(embs.sample_id);
}

PredictionSet load_prediction_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::kMalformedHeader, "empty prediction table");

  std::vector<std::string_view> fields;
  split_fields(lines[0], fields);
  static constexpr std::string_view kFixed[] = {"id", "true_label", "pred_label", "confidence"};
  if (fields.size() < 4) throw Error(ErrorCode::kMalformedHeader, "prediction header too short");
  for (std::size_t i = 0; i < 4; ++i) {
    if (trim(fields[i]) != kFixed[i]) {
      throw Error(ErrorCode::kMalformedHeader,
                  "expected column '" + std::string(kFixed[i]) + "', got '" +
                      std::string(fields[i]) + "'");
    }
  }
  const std::size_t num_logits = fields.size() - 4;
  for (std::size_t c = 0; c < num_logits; ++c) {
    if (trim(fields[4 + c]) != "logit_" + std::to_string(c)) {
      throw Error(ErrorCode::kMalformedHeader, "expected column logit_" + std::to_string(c));
    }
  }
  if (num_logits == 1) throw Error(ErrorCode::kMalformedHeader, "a single logit column");

  PredictionSet preds;
  const std::size_t n = lines.size() - 1;
  preds.sample_id.reserve(n);
  preds.true_label.reserve(n);
  preds.pred_label.reserve(n);
  preds.confidence.reserve(n);
  preds.logits.reserve(n * num_logits);

  std::vector<double> row_logits(num_logits);
  int max_label = 1;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    split_fields(lines[li], fields);
    if (fields.size() != 4 + num_logits) {
      throw Error(ErrorCode::kMalformedRow, "wrong field count" + row_context(li + 1));
    }
    const auto id = parse_integer<std::int64_t>(fields[0], li + 1);
    const int true_label = parse_integer<int>(fields[1], li + 1);
    int pred_label = parse_integer<int>(fields[2], li + 1);
    double conf = parse_real(fields[3], li + 1);
    if (true_label < 0 || pred_label < 0 ||
        (num_logits > 0 && (true_label >= static_cast<int>(num_logits) ||
                            pred_label >= static_cast<int>(num_logits)))) {
      throw Error(ErrorCode::kLabelOutOfRange, "label out of range" + row_context(li + 1));
    }
    if (num_logits > 0) {
      for (std::size_t c = 0; c < num_logits; ++c) row_logits[c] = parse_real(fields[4 + c], li + 1);
      const SoftmaxResult sm = softmax_confidence(row_logits);
      if (std::abs(sm.confidence - conf) > kConfidenceTolerance) {
        throw Error(ErrorCode::kConfidenceMismatch,
                    "stored confidence disagrees with softmax of logits" + row_context(li + 1));
      }
      if (pred_label != sm.label && row_logits[pred_label] != row_logits[sm.label]) {
        throw Error(ErrorCode::kPredictionMismatch,
                    "stored pred_label is not the argmax of logits" + row_context(li + 1));
      }
      pred_label = sm.label;
      conf = sm.confidence;
      preds.logits.insert(preds.logits.end(), row_logits.begin(), row_logits.end());
    }
    max_label = std::max({max_label, true_label, pred_label});
    preds.sample_id.push_back(id);
    preds.true_label.push_back(true_label);
    preds.pred_label.push_back(pred_label);
    preds.confidence.push_back(conf);
  }
  preds.num_classes = num_logits > 0 ? static_cast<int>(num_logits) : max_label + 1;
  validate(preds);
  return preds;
}

void write_prediction_table(const PredictionSet& preds, const std::filesystem::path& path) {
  validate(preds);
  std::string out = "id,true_label,pred_label,confidence";
  if (preds.has_logits()) {
    for (int c = 0; c < preds.num_classes; ++c) out += ",logit_" + std::to_string(c);
  }
  out += '\n';
  for (std::size_t i = 0; i < preds.size(); ++i) {
    append_integer(out, preds.sample_id[i]);
    out += ',';
    append_integer(out, preds.true_label[i]);
    out += ',';
    append_integer(out, preds.pred_label[i]);
    out += ',';
    append_real(out, preds.confidence[i]);
    if (preds.has_logits()) {
      for (double z : preds.logit_row(i)) {
        out += ',';
        append_real(out, z);
      }
    }
    out += '\n';
  }
  auto file = open_for_write(path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

namespace {

EmbeddingMatrix parse_binary_embeddings(const std::string& bytes) {
  std::size_t pos = sizeof(kEmbeddingMagic);
  if (bytes.size() < pos + 4) {
    throw Error(ErrorCode::kMalformedHeader, "truncated embedding header");
  }
  const auto header_len = read_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  if (bytes.size() < pos + header_len) {
    throw Error(ErrorCode::kMalformedHeader, "truncated embedding header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("embedding header: ") + e.what());
  }
  pos += header_len;
  if (!header.is_object() || !header.contains("n") || !header.contains("d") ||
      !header["n"].is_number_unsigned() || !header["d"].is_number_unsigned()) {
    throw Error(ErrorCode::kMalformedHeader, "embedding header needs unsigned n and d");
  }
  if (header.value("dtype", "f32") != "f32" || header.value("order", "row-major") != "row-major") {
    throw Error(ErrorCode::kMalformedHeader, "only dtype f32, row-major order is supported");
  }
  const auto n = header["n"].get<std::uint64_t>();
  const auto d = header["d"].get<std::uint64_t>();
  if (d == 0) throw Error(ErrorCode::kMalformedHeader, "embedding dimension is zero");

  const std::size_t payload = bytes.size() - pos;
  const std::size_t value_bytes = n * d * sizeof(float);
  const bool with_ids = payload == value_bytes + n * sizeof(std::int64_t);
  if (payload != value_bytes && !with_ids) {
    throw Error(ErrorCode::kPayloadLengthMismatch,
                "payload length mismatch: expected " + std::to_string(value_bytes) +
                    " bytes of values (plus optional ids), got " + std::to_string(payload));
  }
  EmbeddingMatrix embs;
  embs.dim = d;
  embs.values.resize(n * d);
  std::memcpy(embs.values.data(), bytes.data() + pos, value_bytes);
  pos += value_bytes;
  embs.sample_id.resize(n);
  if (with_ids) {
    std::memcpy(embs.sample_id.data(), bytes.data() + pos, n * sizeof(std::int64_t));
  } else {
    std::iota(embs.sample_id.begin(), embs.sample_id.end(), std::int64_t{0});
  }
  return embs;
}

EmbeddingMatrix parse_csv_embeddings(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<std::string_view> fields;
  EmbeddingMatrix embs;
  std::size_t first = 0;
  if (!lines.empty()) {
    split_fields(lines[0], fields);
    if (!looks_numeric(fields[0])) first = 1;
  }
  for (std::size_t li = first; li < lines.size(); ++li) {
    split_fields(lines[li], fields);
    if (fields.size() < 2) throw Error(ErrorCode::kMalformedRow, "embedding row needs id and features");
    if (embs.dim == 0) embs.dim = fields.size() - 1;
    if (fields.size() - 1 != embs.dim) {
      throw Error(ErrorCode::kMalformedRow, "inconsistent embedding width" + row_context(li + 1));
    }
    embs.sample_id.push_back(parse_integer<std::int64_t>(fields[0], li + 1));
    for (std::size_t j = 1; j < fields.size(); ++j) {
      embs.values.push_back(static_cast<float>(parse_real(fields[j], li + 1)));
    }
  }
  if (embs.rows() == 0) throw Error(ErrorCode::kInsufficientData, "embedding file has no rows");
  return embs;
}

}  // namespace

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  EmbeddingMatrix embs =
      bytes.size() >= sizeof(kEmbeddingMagic) &&
              std::memcmp(bytes.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) == 0
          ? parse_binary_embeddings(bytes)
          : parse_csv_embeddings(bytes);
  validate(embs);
  return embs;
}

void write_embeddings_binary(const EmbeddingMatrix& embs, const std::filesystem::path& path) {
  validate(embs);
  const nlohmann::json header = {{"n", embs.rows()},
                                 {"d", embs.dim},
                                 {"dtype", "f32"},
                                 {"order", "row-major"}};
  const std::string header_text = header.dump();
  const auto header_len = static_cast<std::uint32_t>(header_text.size());
  auto file = open_for_write(path);
  file.write(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  file.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  file.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  file.write(reinterpret_cast<const char*>(embs.values.data()),
             static_cast<std::streamsize>(embs.values.size() * sizeof(float)));
  file.write(reinterpret_cast<const char*>(embs.sample_id.data()),
             static_cast<std::streamsize>(embs.sample_id.size() * sizeof(std::int64_t)));
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_embeddings_csv(const EmbeddingMatrix& embs, const std::filesystem::path& path) {
  validate(embs);
  std::string out = "id";
  for (std::size_t j = 0; j < embs.dim; ++j) out += ",f_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < embs.rows(); ++i) {
    append_integer(out, embs.sample_id[i]);
    for (float v : embs.row(i)) {
      out += ',';
      append_real(out, static_cast<double>(v));
    }
    out += '\n';
  }
  auto file = open_for_write(path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

EmbeddingMatrix align_embeddings(const PredictionSet& preds, const EmbeddingMatrix& embs) {
  if (preds.sample_id == embs.sample_id) return embs;
  std::unordered_map<std::int64_t, std::size_t> by_id;
  by_id.reserve(embs.rows());
  for (std::size_t i = 0; i < embs.rows(); ++i) by_id.emplace(embs.sample_id[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(preds.size());
  for (auto id : preds.sample_id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kMisalignedIds, "no embedding for prediction id " + std::to_string(id));
    }
    rows.push_back(it->second);
  }
  return embs.subset(rows);
}

std::pair<DatasetPart, DatasetPart> split_dataset(const PredictionSet& preds,
                                                  const EmbeddingMatrix* embs,
                                                  const SplitSpec& spec) {
  require(spec.fraction > 0.0 && spec.fraction < 1.0, ErrorCode::kInvalidArgument,
          "split fraction must lie strictly between 0 and 1");
  if (embs != nullptr && embs->sample_id != preds.sample_id) {
    throw Error(ErrorCode::kMisalignedIds, "embedding ids do not follow prediction ids");
  }
  const std::size_t n = preds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto cut = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(n)));
  std::pair<DatasetPart, DatasetPart> parts;
  parts.first.rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  parts.second.rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  for (DatasetPart* part : {&parts.first, &parts.second}) {
    std::sort(part->rows.begin(), part->rows.end());
    part->preds = preds.subset(part->rows);
    if (embs != nullptr) part->embs = embs->subset(part->rows);
  }
  return parts;
}

}  // namespace procal
