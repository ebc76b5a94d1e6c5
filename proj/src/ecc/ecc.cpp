#include "coldisturb/ecc.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "coldisturb/random.hpp"

namespace coldisturb {

const char* to_string(CodeConstruction c) {
  switch (c) {
    case CodeConstruction::hamming_7_4: return "hamming-7-4";
    case CodeConstruction::secded_72_64: return "secded-72-64";
    case CodeConstruction::sec_136_128: return "sec-136-128";
    case CodeConstruction::custom: return "custom";
  }
  return "?";
}

const char* to_string(DecodeKind k) {
  switch (k) {
    case DecodeKind::clean: return "clean";
    case DecodeKind::corrected: return "corrected";
    case DecodeKind::miscorrected: return "miscorrected";
    case DecodeKind::detected_uncorrectable: return "detected-uncorrectable";
  }
  return "?";
}

LinearCode LinearCode::hamming_7_4() {
  std::vector<std::uint64_t> cols(7);
  std::iota(cols.begin(), cols.end(), 1);
  return from_columns(std::move(cols), 3, CodeConstruction::hamming_7_4);
}

LinearCode LinearCode::secded_72_64() {
  std::vector<std::uint64_t> cols;
  for (std::uint64_t v = 1; v <= 71; ++v) cols.push_back(0x80 | v);
  cols.push_back(0x80);
  return from_columns(std::move(cols), 8, CodeConstruction::secded_72_64);
}

LinearCode LinearCode::sec_136_128() {
  std::vector<std::uint64_t> cols(136);
  std::iota(cols.begin(), cols.end(), 1);
  return from_columns(std::move(cols), 8, CodeConstruction::sec_136_128);
}

LinearCode LinearCode::from_columns(std::vector<std::uint64_t> columns, std::uint32_t rows,
                                    CodeConstruction construction) {
  if (rows == 0 || rows > 64) throw ConfigError(fmt::format("parity-check matrix needs 1..64 rows, got {}", rows));
  if (columns.empty()) throw ConfigError("parity-check matrix has no columns");
  const std::uint64_t mask = rows == 64 ? ~0ULL : ((1ULL << rows) - 1);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == 0) throw ConfigError(fmt::format("column {} of H is zero", j));
    if (columns[j] & ~mask) throw ConfigError(fmt::format("column {} of H has bits beyond row {}", j, rows));
  }
  LinearCode c;
  c.construction_ = construction;
  c.rows_ = rows;
  c.columns_ = std::move(columns);
  c.prepare();
  return c;
}

void LinearCode::prepare() {
  lookup_.clear();
  for (std::uint32_t j = 0; j < n(); ++j) lookup_.emplace_back(columns_[j], j);
  std::sort(lookup_.begin(), lookup_.end());
  for (std::size_t i = 1; i < lookup_.size(); ++i)
    if (lookup_[i].first == lookup_[i - 1].first)
      throw ConfigError(fmt::format("columns {} and {} of H are equal", lookup_[i - 1].second, lookup_[i].second));

  basis_.fill({0, 0});
  parity_.clear();
  data_.clear();
  for (std::uint32_t j = 0; j < n(); ++j) {
    std::uint64_t v = columns_[j], combo = 0;
    for (int b = 63; b >= 0 && v; --b)
      if ((v >> b) & 1) {
        if (!basis_[b].first) break;
        v ^= basis_[b].first;
        combo ^= basis_[b].second;
      }
    if (v) {
      const int lead = 63 - std::countl_zero(v);
      basis_[lead] = {v, combo ^ (1ULL << parity_.size())};
      parity_.push_back(j);
    } else {
      data_.push_back(j);
    }
  }
  rank_ = static_cast<std::uint32_t>(parity_.size());
  if (data_.empty()) throw ConfigError("parity-check matrix leaves no data bits");
}

LinearCode LinearCode::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    line = line.substr(start);
    for (char ch : line)
      if (ch != '0' && ch != '1')
        throw ConfigError(fmt::format("line {}: unexpected character '{}' in parity-check matrix", lineno, ch));
    if (!rows.empty() && line.size() != rows.front().size())
      throw ConfigError(fmt::format("line {}: row has {} columns, expected {}", lineno, line.size(), rows.front().size()));
    rows.push_back(line);
  }
  if (rows.empty()) throw ConfigError("parity-check matrix file has no rows");
  if (rows.size() > 64) throw ConfigError("parity-check matrix has more than 64 rows");
  std::vector<std::uint64_t> cols(rows.front().size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (rows[i][j] == '1') cols[j] |= 1ULL << i;
  return from_columns(std::move(cols), static_cast<std::uint32_t>(rows.size()), CodeConstruction::custom);
}

LinearCode LinearCode::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open parity-check matrix file {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string LinearCode::name() const {
  if (construction_ == CodeConstruction::secded_72_64) return fmt::format("secded({},{})", n(), k());
  if (construction_ == CodeConstruction::custom) return fmt::format("custom({},{})", n(), k());
  if (construction_ == CodeConstruction::hamming_7_4) return fmt::format("hamming({},{})", n(), k());
  return fmt::format("sec({},{})", n(), k());
}

std::uint64_t LinearCode::syndrome(std::span<const std::uint8_t> word) const {
  if (word.size() != n()) throw InputError(fmt::format("word has {} bits, code length is {}", word.size(), n()));
  std::uint64_t s = 0;
  for (std::uint32_t j = 0; j < n(); ++j)
    if (word[j] & 1) s ^= columns_[j];
  return s;
}

std::optional<std::uint32_t> LinearCode::column_for(std::uint64_t syndrome) const {
  auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::pair<std::uint64_t, std::uint32_t>{syndrome, 0});
  if (it == lookup_.end() || it->first != syndrome) return std::nullopt;
  return it->second;
}

Bits LinearCode::encode(std::span<const std::uint8_t> data) const {
  if (data.size() != k()) throw InputError(fmt::format("data has {} bits, code carries {}", data.size(), k()));
  Bits word(n(), 0);
  std::uint64_t s = 0;
  for (std::uint32_t i = 0; i < k(); ++i) {
    word[data_[i]] = data[i] & 1;
    if (word[data_[i]]) s ^= columns_[data_[i]];
  }
  std::uint64_t combo = 0;
  for (int b = 63; b >= 0 && s; --b)
    if ((s >> b) & 1) {
      s ^= basis_[b].first;
      combo ^= basis_[b].second;
    }
  for (std::uint32_t p = 0; p < rank_; ++p) word[parity_[p]] = (combo >> p) & 1;
  return word;
}

Bits LinearCode::extract_data(std::span<const std::uint8_t> codeword) const {
  if (codeword.size() != n()) throw InputError(fmt::format("word has {} bits, code length is {}", codeword.size(), n()));
  Bits d(k());
  for (std::uint32_t i = 0; i < k(); ++i) d[i] = codeword[data_[i]] & 1;
  return d;
}

DecodeResult decode(const LinearCode& code, std::span<const std::uint8_t> received) {
  DecodeResult r;
  const auto s = code.syndrome(received);
  r.word.assign(received.begin(), received.end());
  if (s == 0) return r;
  if (auto j = code.column_for(s)) {
    r.kind = DecodeKind::corrected;
    r.position = *j;
    r.word[*j] ^= 1;
  } else {
    r.kind = DecodeKind::detected_uncorrectable;
  }
  return r;
}

DecodeOutcome evaluate(const LinearCode& code, std::span<const std::uint8_t> sent,
                       std::span<const std::uint8_t> received) {
  if (sent.size() != received.size()) throw InputError("sent and received words differ in length");
  const auto d = decode(code, received);
  DecodeOutcome o;
  o.kind = d.kind;
  o.position = d.position;
  for (std::size_t i = 0; i < sent.size(); ++i) o.residual_errors += (sent[i] & 1) != (d.word[i] & 1);
  if (d.kind == DecodeKind::corrected && o.residual_errors > 0) o.kind = DecodeKind::miscorrected;
  return o;
}

namespace {

void grade(const LinearCode& code, std::uint64_t s, const std::uint32_t* pos, std::uint32_t w,
           MiscorrectionResult& r) {
  ++r.patterns;
  if (s == 0) {
    ++r.undetected;
    return;
  }
  const auto j = code.column_for(s);
  if (!j) {
    ++r.detected;
    return;
  }
  const bool hit = std::find(pos, pos + w, *j) != pos + w;
  const std::uint32_t residual = hit ? w - 1 : w + 1;
  (residual == 0 ? r.corrected : r.miscorrected)++;
}

}  // namespace

std::uint64_t binomial(std::uint32_t n, std::uint32_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint32_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > ~0ULL) return ~0ULL;
  }
  return static_cast<std::uint64_t>(r);
}

MiscorrectionResult miscorrection_exhaustive(const LinearCode& code, std::uint32_t weight, std::uint64_t cap) {
  const std::uint32_t n = code.n();
  if (weight == 0 || weight > n) throw InputError(fmt::format("error weight must be in 1..{}", n));
  const auto total = binomial(n, weight);
  if (total > cap)
    throw ModeError(fmt::format("exhaustive enumeration of C({}, {}) = {} patterns exceeds the cap of {}", n, weight,
                                total, cap));
  MiscorrectionResult r;
  r.mode = MiscorrectionMode::exhaustive;
  r.weight = weight;
  std::vector<std::uint32_t> pos(weight);
  std::vector<std::uint64_t> partial(weight + 1, 0);
  const auto& cols = code.columns();
  // Odometer over strictly increasing position tuples, keeping prefix syndromes.
  std::uint32_t depth = 0;
  pos[0] = 0;
  while (true) {
    if (pos[depth] > n - (weight - depth)) {
      if (depth == 0) break;
      --depth;
      ++pos[depth];
      continue;
    }
    partial[depth + 1] = partial[depth] ^ cols[pos[depth]];
    if (depth + 1 == weight) {
      grade(code, partial[weight], pos.data(), weight, r);
      ++pos[depth];
    } else {
      pos[depth + 1] = pos[depth] + 1;
      ++depth;
    }
  }
  return r;
}

MiscorrectionResult miscorrection_monte_carlo(const LinearCode& code, std::uint32_t weight, std::uint64_t trials,
                                              std::uint64_t seed) {
  const std::uint32_t n = code.n();
  if (weight == 0 || weight > n) throw InputError(fmt::format("error weight must be in 1..{}", n));
  MiscorrectionResult r;
  r.mode = MiscorrectionMode::monte_carlo;
  r.weight = weight;
  r.seed = seed;
  SplitMix rng(seed);
  std::vector<std::uint32_t> idx(n);
  const auto& cols = code.columns();
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::iota(idx.begin(), idx.end(), 0);
    std::uint64_t s = 0;
    for (std::uint32_t i = 0; i < weight; ++i) {
      const auto j = i + static_cast<std::uint32_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
      s ^= cols[idx[i]];
    }
    grade(code, s, idx.data(), weight, r);
  }
  return r;
}

std::uint64_t ChunkHistogram::chunks() const {
  std::uint64_t total = 0;
  for (std::size_t i = 1; i < bins.size(); ++i) total += bins[i];
  return total;
}

ChunkHistogram chunk_histogram(const BitflipReport& report, std::uint32_t chunk_bits) {
  if (chunk_bits == 0) throw InputError("chunk size must be positive");
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, std::uint32_t> per_chunk;
  for (const auto& f : report.flips) ++per_chunk[{f.where.bank, f.where.row, f.where.column / chunk_bits}];
  ChunkHistogram h;
  h.chunk_bits = chunk_bits;
  for (const auto& [key, count] : per_chunk) {
    ++h.bins[std::min(count, ChunkHistogram::kTopBin)];
    if (count >= 3) ++h.beyond_secded;
  }
  return h;
}

double overhead(const LinearCode& code) { return static_cast<double>(code.n() - code.k()) / code.k(); }

}  // namespace coldisturb
