#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lssa {

enum class Label : std::uint8_t { carrier = 0, stego = 1 };

const char* label_name(Label l) noexcept;

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kCount = 4;
}  // namespace special

/// Framed sequences never exceed this many ids (BOS and EOS included).
inline constexpr std::size_t kMaxSequenceLength = 64;

/// Lowercases ASCII, splits on whitespace and emits every ASCII punctuation
/// character as its own token. Non-ASCII bytes are word characters.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
public:
    /// Vocabulary of only the four specials.
    Vocab();

    /// Keeps the (cap - 4) most frequent tokens; ties go to the
    /// lexicographically smaller token. Throws ConfigError if cap < 5.
    static Vocab build(const std::vector<std::vector<std::string>>& corpus, std::size_t cap);

    /// Ids 4.. are assigned to `tokens` in order.
    static Vocab from_tokens(const std::vector<std::string>& tokens);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const noexcept { return token_of_.size(); }
    int id(std::string_view token) const;
    const std::string& token(int id) const;
    bool contains(std::string_view token) const;

    /// BOS + ids + EOS, truncated so the result fits kMaxSequenceLength.
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    /// Space-joined tokens with specials dropped.
    std::string decode(const std::vector<int>& ids) const;

    const std::vector<std::string>& tokens() const noexcept { return token_of_; }

    bool operator==(const Vocab& o) const { return token_of_ == o.token_of_; }

private:
    std::vector<std::string> token_of_;
    std::unordered_map<std::string, int> id_of_;
};

struct TokenSequence {
    std::vector<int> ids;  ///< BOS ... EOS
    std::optional<Label> label;

    /// Number of scored positions: every id after BOS, EOS included.
    std::size_t scored_len() const noexcept { return ids.empty() ? 0 : ids.size() - 1; }
};

TokenSequence encode_text(const Vocab& vocab, std::string_view text,
                          std::optional<Label> label = std::nullopt);

struct DatasetSplit {
    std::vector<TokenSequence> train;
    std::vector<TokenSequence> validation;
    std::vector<TokenSequence> test;
    std::uint64_t seed = 0;
};

/// Index form of a split, for callers that need to track record identity.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Stratified 70/30 split followed by a 10% validation carve-out of train.
/// |test| = round(0.3 N), |validation| = round(0.1 (N - |test|)); per-class
/// counts are apportioned by largest remainder. Throws ConfigError if N < 10.
SplitIndices split_indices(const std::vector<std::optional<Label>>& labels, std::uint64_t seed);
DatasetSplit split_dataset(const std::vector<TokenSequence>& records, std::uint64_t seed);

/// Right-padded batch. Step t consumes ids[t] and predicts ids[t + 1];
/// mask(b, t) is 1 exactly when that target is not PAD.
struct Batch {
    std::size_t batch_size = 0;
    std::size_t max_len = 0;         ///< columns of `ids`
    std::vector<int> ids;            ///< batch_size × max_len
    std::vector<std::uint8_t> mask;  ///< batch_size × (max_len - 1)
    std::vector<std::size_t> lengths;
    std::vector<Label> labels;       ///< empty unless every sequence is labeled
    std::vector<std::size_t> source; ///< index of each row in the input list

    int id(std::size_t b, std::size_t t) const noexcept { return ids[b * max_len + t]; }
    std::uint8_t scored(std::size_t b, std::size_t t) const noexcept {
        return mask[b * (max_len - 1) + t];
    }
};

/// Builds one batch from the listed sequences (in the given order).
Batch make_batch(const std::vector<TokenSequence>& sequences, std::span<const std::size_t> rows);

/// Seeded shuffle, then consecutive chunks of batch_size; the last partial batch is kept.
std::vector<Batch> make_batches(const std::vector<TokenSequence>& sequences,
                                std::size_t batch_size, std::uint64_t seed);

/// Same chunking without shuffling; used for evaluation.
std::vector<Batch> make_batches_ordered(const std::vector<TokenSequence>& sequences,
                                        std::size_t batch_size);

/// Non-empty lines of a UTF-8 text file, trailing CR stripped.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace lssa
