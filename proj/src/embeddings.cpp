#include "medrank/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "medrank/hash.hpp"

namespace medrank {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim), oov_(dim, 0.0) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
}

bool EmbeddingTable::insert(std::string token, std::span<const double> vec) {
  if (vec.size() != dim_) {
    throw std::invalid_argument("embedding for '" + token + "' has " +
                                std::to_string(vec.size()) + " components, expected " +
                                std::to_string(dim_));
  }
  for (double v : vec) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("non-finite embedding component for '" + token + "'");
    }
  }
  if (token.empty()) throw std::invalid_argument("empty token");
  if (index_.contains(token)) return false;
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  values_.insert(values_.end(), vec.begin(), vec.end());
  return true;
}

std::span<const double> EmbeddingTable::lookup(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return oov_;
  return {values_.data() + it->second * dim_, dim_};
}

bool EmbeddingTable::contains(std::string_view token) const {
  return index_.find(token) != index_.end();
}

void EmbeddingTable::set_oov_policy(OovPolicy policy) {
  std::fill(oov_.begin(), oov_.end(), 0.0);
  if (policy == OovPolicy::kZero || tokens_.empty()) return;
  for (std::size_t t = 0; t < tokens_.size(); ++t) {
    for (std::size_t j = 0; j < dim_; ++j) oov_[j] += values_[t * dim_ + j];
  }
  for (double& v : oov_) v /= static_cast<double>(tokens_.size());
}

std::uint64_t EmbeddingTable::content_hash() const {
  Fnv1a64 h;
  h.update_value(static_cast<std::uint64_t>(dim_));
  h.update_value(static_cast<std::uint64_t>(tokens_.size()));
  for (const auto& t : tokens_) {
    h.update(t);
    h.update_value('\0');
  }
  h.update({reinterpret_cast<const unsigned char*>(values_.data()),
            values_.size() * sizeof(double)});
  h.update({reinterpret_cast<const unsigned char*>(oov_.data()),
            oov_.size() * sizeof(double)});
  return h.digest();
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

EmbeddingTable parse_embeddings(std::string_view content, OovPolicy oov) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.remove_suffix(1);
    }
    lines.push_back(line);
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  if (lines.empty()) throw EmbeddingFormatError(1, "missing header");
  auto header = split_fields(lines[0]);
  std::size_t count = 0;
  std::size_t dim = 0;
  if (header.size() != 2 || !parse_number(header[0], count) ||
      !parse_number(header[1], dim) || dim == 0) {
    throw EmbeddingFormatError(1, "malformed header, expected \"count dim\"");
  }
  if (lines.size() - 1 != count) {
    throw EmbeddingFormatError(lines.size(), "header declares " + std::to_string(count) +
                                                 " rows but file has " +
                                                 std::to_string(lines.size() - 1));
  }

  EmbeddingTable table(dim);
  std::vector<double> vec(dim);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto fields = split_fields(lines[li]);
    if (fields.size() != dim + 1) {
      throw EmbeddingFormatError(li + 1, "expected token and " + std::to_string(dim) +
                                             " components, got " +
                                             std::to_string(fields.size()) + " fields");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!parse_number(fields[j + 1], vec[j]) || !std::isfinite(vec[j])) {
        throw EmbeddingFormatError(li + 1, "non-numeric component '" +
                                               std::string(fields[j + 1]) + "'");
      }
    }
    if (!table.insert(std::string(fields[0]), vec)) {
      spdlog::warn("embeddings line {}: duplicate token '{}' ignored", li + 1, fields[0]);
    }
  }
  table.set_oov_policy(oov);
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, OovPolicy oov) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embeddings file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_embeddings(buf.str(), oov);
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write embeddings file " + path.string());
  out << table.size() << ' ' << table.dim() << '\n';
  out << std::setprecision(17);
  for (const auto& token : table.tokens()) {
    out << token;
    for (double v : table.lookup(token)) out << ' ' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Matrix embed(const TokenSequence& seq, const EmbeddingTable& table, std::size_t min_len) {
  if (min_len == 0) throw std::invalid_argument("min_len must be >= 1");
  const std::size_t rows = std::max(seq.size(), min_len);
  Matrix out(rows, table.dim());
  for (std::size_t i = 0; i < rows; ++i) {
    auto src = i < seq.size() ? table.lookup(seq[i]) : table.oov_vector();
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace medrank
