#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lssa/bitstream.hpp"
#include "lssa/corpus.hpp"
#include "lssa/language_model.hpp"

namespace lssa {

enum class CodecKind { bins, flc, vlc };

/// Bins(b) and FLC(k) embed `param` bits per word; VLC(m) builds a Huffman
/// tree over the top `param` candidates.
struct CodecSpec {
    CodecKind kind = CodecKind::flc;
    unsigned param = 1;
    std::uint64_t partition_seed = 0;  ///< Bins only

    /// "bins:2", "flc:3", "vlc:8"; an optional third field sets the
    /// partition seed ("bins:2:77"). Throws ConfigError.
    static CodecSpec parse(std::string_view text);
    /// Throws ConfigError when the parameter is out of range.
    void validate() const;
    /// "bins:2", "flc:3", "vlc:8" (no seed).
    std::string name() const;

    bool operator==(const CodecSpec&) const = default;
};

std::string codec_kind_name(CodecKind kind);

struct BinPartition {
    std::vector<int> bin_of;             ///< per token id; -1 for specials
    std::vector<std::vector<int>> bins;  ///< ascending ids inside each bin
};

/// Seeded permutation of the non-special ids dealt round-robin into 2^b
/// bins. Throws ConfigError if 2^b exceeds the number of non-special ids.
BinPartition bins_partition(std::size_t vocab_size, unsigned b, std::uint64_t partition_seed);

/// Huffman tree over a candidate pool. Leaves are pool entries.
class HuffmanCode {
public:
    struct Node {
        double prob = 0.0;
        int min_id = 0;
        int token = -1;  ///< leaf token id, -1 for internal nodes
        int zero = -1;   ///< child taken on bit 0
        int one = -1;
    };

    std::size_t root() const noexcept { return nodes_.size() - 1; }
    const Node& node(std::size_t i) const { return nodes_.at(i); }
    std::size_t leaf_count() const noexcept { return codes_.size(); }

    /// Bit string of `token`; throws IndexError if it is not in the pool.
    const std::string& code(int token) const;
    bool contains(int token) const noexcept;
    /// (token, code) pairs in pool order.
    const std::vector<std::pair<int, std::string>>& codes() const noexcept { return codes_; }

private:
    friend HuffmanCode huffman_build(const std::vector<std::pair<int, double>>& pool);
    std::vector<Node> nodes_;
    std::vector<std::pair<int, std::string>> codes_;
};

/// Repeatedly merges the two nodes of lowest probability (ties: smaller
/// minimum token id). The heavier child gets bit 0; on equal probability the
/// child holding the smaller minimum id gets 0. Pool ids must be distinct.
/// Throws ConfigError for pools smaller than 2 or non-positive probabilities.
HuffmanCode huffman_build(const std::vector<std::pair<int, double>>& pool);

/// One generation step's candidate set, renormalized. Sorted by
/// (probability desc, id asc) for FLC/VLC; all non-special ids for Bins.
std::vector<std::pair<int, double>> candidate_pool(std::span<const double> dist, const CodecSpec& codec);

struct StegoRecord {
    TokenSequence tokens;               ///< BOS w_1..w_n EOS, label stego
    std::size_t bits_consumed = 0;      ///< real payload bits only
    std::vector<unsigned> step_bits;    ///< bits read per word, padding included

    std::size_t words() const noexcept { return tokens.ids.size() >= 2 ? tokens.ids.size() - 2 : 0; }
    double bpw() const noexcept {
        return words() ? static_cast<double>(bits_consumed) / static_cast<double>(words()) : 0.0;
    }
};

/// Generates target_len words, each chosen by the next payload bits. Bits
/// past the end of the payload read as 0. Throws ConfigError if target_len
/// is 0 or exceeds kMaxSequenceLength - 2.
StegoRecord embed(const LanguageModel& model, const CodecSpec& codec, const BitStream& payload,
                  std::size_t target_len);

/// Replays generation over `tokens` (BOS ... EOS framing optional) and
/// returns the bits that select each observed word, padding included.
/// Throws DesyncError when a word could not have been produced.
BitStream extract(const LanguageModel& model, const CodecSpec& codec, const std::vector<int>& tokens);

/// Total real bits over total words. Throws ConfigError for no records.
double measure_bpw(const std::vector<StegoRecord>& records);

}  // namespace lssa
