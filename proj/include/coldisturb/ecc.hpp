#pragma once

// Binary linear block codes given by a parity-check matrix, syndrome
// decoding, miscorrection measurement and per-chunk flip histograms.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coldisturb/engine.hpp"

namespace coldisturb {

using Bits = std::vector<std::uint8_t>;

enum class CodeConstruction : std::uint8_t { hamming_7_4, secded_72_64, sec_136_128, custom };

const char* to_string(CodeConstruction c);

/// Code defined by H, stored column-wise: bit i of column j is H[i][j].
/// Encoding is systematic over the information positions found by
/// elimination (the first columns that raise the rank carry parity).
class LinearCode {
 public:
  /// Columns 1..7.
  static LinearCode hamming_7_4();
  /// Extended Hamming: columns 0x81..0xC7 plus the overall-parity column 0x80.
  static LinearCode secded_72_64();
  /// Shortened Hamming: columns are the first `n` nonzero 8-bit values, ascending.
  static LinearCode sec_136_128();
  /// Throws ConfigError on zero or repeated columns, or rows > 64.
  static LinearCode from_columns(std::vector<std::uint64_t> columns, std::uint32_t rows,
                                 CodeConstruction construction = CodeConstruction::custom);
  /// Rows of '0'/'1' characters, one H row per line; blank lines and
  /// lines starting with '#' are skipped.
  static LinearCode load(const std::string& path);
  static LinearCode parse(const std::string& text);

  std::uint32_t n() const { return static_cast<std::uint32_t>(columns_.size()); }
  std::uint32_t k() const { return n() - rank_; }
  std::uint32_t rows() const { return rows_; }
  const std::vector<std::uint64_t>& columns() const { return columns_; }
  CodeConstruction construction() const { return construction_; }
  std::string name() const;

  /// Throws InputError unless data has k bits.
  Bits encode(std::span<const std::uint8_t> data) const;
  Bits extract_data(std::span<const std::uint8_t> codeword) const;

  std::uint64_t syndrome(std::span<const std::uint8_t> word) const;
  /// Position whose column equals the syndrome, if any.
  std::optional<std::uint32_t> column_for(std::uint64_t syndrome) const;

  const std::vector<std::uint32_t>& parity_positions() const { return parity_; }

 private:
  LinearCode() = default;
  void prepare();

  CodeConstruction construction_ = CodeConstruction::custom;
  std::uint32_t rows_ = 0;
  std::uint32_t rank_ = 0;
  std::vector<std::uint64_t> columns_;
  std::vector<std::uint32_t> parity_;
  std::vector<std::uint32_t> data_;
  // Elimination basis indexed by leading bit: (reduced vector, parity-combination mask).
  std::array<std::pair<std::uint64_t, std::uint64_t>, 64> basis_{};
  std::vector<std::pair<std::uint64_t, std::uint32_t>> lookup_;  // sorted (column, position)
};

enum class DecodeKind : std::uint8_t { clean, corrected, miscorrected, detected_uncorrectable };

const char* to_string(DecodeKind k);

struct DecodeResult {
  /// clean, corrected (a bit was flipped) or detected_uncorrectable; the
  /// decoder alone cannot tell a correction from a miscorrection.
  DecodeKind kind = DecodeKind::clean;
  std::optional<std::uint32_t> position;
  Bits word;
};

/// Zero syndrome: clean. Syndrome equal to column j: flip j. Otherwise
/// detected-uncorrectable. Throws InputError on a length mismatch.
DecodeResult decode(const LinearCode& code, std::span<const std::uint8_t> received);

struct DecodeOutcome {
  DecodeKind kind = DecodeKind::clean;
  std::optional<std::uint32_t> position;
  std::uint32_t residual_errors = 0;
};

/// Decodes `received` and grades the result against the codeword that was sent.
DecodeOutcome evaluate(const LinearCode& code, std::span<const std::uint8_t> sent,
                       std::span<const std::uint8_t> received);

enum class MiscorrectionMode : std::uint8_t { exhaustive, monte_carlo };

struct MiscorrectionResult {
  MiscorrectionMode mode = MiscorrectionMode::exhaustive;
  std::uint32_t weight = 0;
  std::uint64_t patterns = 0;
  std::uint64_t miscorrected = 0;
  std::uint64_t detected = 0;
  std::uint64_t corrected = 0;
  std::uint64_t undetected = 0;  ///< error patterns that are codewords
  std::uint64_t seed = 0;

  double rate() const { return patterns ? static_cast<double>(miscorrected) / static_cast<double>(patterns) : 0.0; }
};

inline constexpr std::uint64_t kExhaustiveCap = 50'000'000;

/// Every C(n, w) pattern of weight w (ModeError above `cap`).
MiscorrectionResult miscorrection_exhaustive(const LinearCode& code, std::uint32_t weight,
                                             std::uint64_t cap = kExhaustiveCap);
/// `trials` uniformly random weight-w patterns.
MiscorrectionResult miscorrection_monte_carlo(const LinearCode& code, std::uint32_t weight, std::uint64_t trials,
                                              std::uint64_t seed);

std::uint64_t binomial(std::uint32_t n, std::uint32_t k);

struct ChunkHistogram {
  static constexpr std::uint32_t kTopBin = 15;
  std::uint32_t chunk_bits = 64;
  /// bins[i] = chunks with exactly i flips for i < 15; bins[15] = 15 or more.
  std::array<std::uint64_t, kTopBin + 1> bins{};
  /// Chunks with three or more flips: beyond SECDED.
  std::uint64_t beyond_secded = 0;

  std::uint64_t chunks() const;
  bool empty() const { return chunks() == 0; }
};

/// Splits every row into consecutive chunk_bits-bit chunks and counts flips per chunk.
ChunkHistogram chunk_histogram(const BitflipReport& report, std::uint32_t chunk_bits = 64);

/// Storage overhead (n - k) / k.
double overhead(const LinearCode& code);

}  // namespace coldisturb
