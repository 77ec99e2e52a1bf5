#include "lssa/stego_codec.hpp"

#include <algorithm>
#include <charconv>
#include <queue>

#include "lssa/error.hpp"
#include "lssa/rng.hpp"

namespace lssa {

namespace {

unsigned parse_unsigned(std::string_view s, std::string_view what) {
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("bad " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split_colon(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(':', start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool by_prob_desc(const std::pair<int, double>& a, const std::pair<int, double>& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
}

// Per-step choice state shared by embedding and extraction.
struct Chooser {
    const CodecSpec& codec;
    BinPartition partition;

    Chooser(const LanguageModel& model, const CodecSpec& c) : codec(c) {
        codec.validate();
        if (codec.kind == CodecKind::bins)
            partition = bins_partition(model.config.vocab_size, codec.param, codec.partition_seed);
    }

    // Highest-probability id of a bin, ties to the smaller id (bins are ascending).
    static int bin_argmax(std::span<const double> dist, const std::vector<int>& bin) {
        int best = bin.front();
        for (int id : bin)
            if (dist[static_cast<std::size_t>(id)] > dist[static_cast<std::size_t>(best)]) best = id;
        return best;
    }
};

}  // namespace

std::string codec_kind_name(CodecKind kind) {
    switch (kind) {
        case CodecKind::bins: return "bins";
        case CodecKind::flc: return "flc";
        case CodecKind::vlc: return "vlc";
    }
    return "?";
}

CodecSpec CodecSpec::parse(std::string_view text) {
    const auto parts = split_colon(text);
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("codec must look like flc:2, got '" + std::string(text) + "'");
    CodecSpec spec;
    if (parts[0] == "bins") spec.kind = CodecKind::bins;
    else if (parts[0] == "flc") spec.kind = CodecKind::flc;
    else if (parts[0] == "vlc") spec.kind = CodecKind::vlc;
    else throw ConfigError("unknown codec '" + std::string(parts[0]) + "'");
    spec.param = parse_unsigned(parts[1], "codec parameter");
    if (parts.size() == 3) {
        if (spec.kind != CodecKind::bins) throw ConfigError("only bins takes a partition seed");
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), seed);
        if (ec != std::errc() || ptr != parts[2].data() + parts[2].size())
            throw ConfigError("bad partition seed '" + std::string(parts[2]) + "'");
        spec.partition_seed = seed;
    }
    spec.validate();
    return spec;
}

void CodecSpec::validate() const {
    if (kind == CodecKind::vlc) {
        if (param < 2) throw ConfigError("vlc pool size must be >= 2");
    } else if (param < 1 || param > 30) {
        throw ConfigError(codec_kind_name(kind) + " bits per word must be in 1..30");
    }
}

std::string CodecSpec::name() const { return codec_kind_name(kind) + ":" + std::to_string(param); }

BinPartition bins_partition(std::size_t vocab_size, unsigned b, std::uint64_t partition_seed) {
    const std::size_t usable = vocab_size > special::kCount ? vocab_size - special::kCount : 0;
    if (b < 1 || b > 30 || (std::size_t{1} << b) > usable)
        throw ConfigError("bins: 2^b exceeds the number of non-special tokens");
    std::vector<int> ids(usable);
    for (std::size_t i = 0; i < usable; ++i) ids[i] = static_cast<int>(i) + special::kCount;
    Rng rng(sub_seed(partition_seed, "bins-partition"));
    rng.shuffle(ids);

    BinPartition out;
    out.bins.resize(std::size_t{1} << b);
    out.bin_of.assign(vocab_size, -1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t bin = i % out.bins.size();
        out.bins[bin].push_back(ids[i]);
        out.bin_of[static_cast<std::size_t>(ids[i])] = static_cast<int>(bin);
    }
    for (auto& bin : out.bins) std::ranges::sort(bin);
    return out;
}

const std::string& HuffmanCode::code(int token) const {
    for (const auto& [id, c] : codes_)
        if (id == token) return c;
    throw IndexError("token " + std::to_string(token) + " is not in the Huffman pool");
}

bool HuffmanCode::contains(int token) const noexcept {
    return std::ranges::any_of(codes_, [&](const auto& e) { return e.first == token; });
}

HuffmanCode huffman_build(const std::vector<std::pair<int, double>>& pool) {
    if (pool.size() < 2) throw ConfigError("huffman_build needs at least 2 candidates");
    HuffmanCode hc;
    auto& nodes = hc.nodes_;
    for (const auto& [id, p] : pool) {
        if (!(p > 0.0)) throw ConfigError("huffman_build: probabilities must be positive");
        nodes.push_back({p, id, id, -1, -1});
    }
    auto lighter = [&](int a, int b) {
        const auto& x = nodes[static_cast<std::size_t>(a)];
        const auto& y = nodes[static_cast<std::size_t>(b)];
        return x.prob != y.prob ? x.prob < y.prob : x.min_id < y.min_id;
    };
    auto cmp = [&](int a, int b) { return lighter(b, a); };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> open(cmp);
    for (std::size_t i = 0; i < nodes.size(); ++i) open.push(static_cast<int>(i));

    while (open.size() > 1) {
        const int a = open.top();
        open.pop();
        const int b = open.top();
        open.pop();
        // a is the lighter one, so the heavier b takes bit 0.
        HuffmanCode::Node parent;
        parent.prob = nodes[static_cast<std::size_t>(a)].prob + nodes[static_cast<std::size_t>(b)].prob;
        parent.min_id = std::min(nodes[static_cast<std::size_t>(a)].min_id, nodes[static_cast<std::size_t>(b)].min_id);
        const bool tie = nodes[static_cast<std::size_t>(a)].prob == nodes[static_cast<std::size_t>(b)].prob;
        parent.zero = tie ? a : b;
        parent.one = tie ? b : a;
        nodes.push_back(parent);
        open.push(static_cast<int>(nodes.size() - 1));
    }

    for (const auto& [id, p] : pool) hc.codes_.emplace_back(id, std::string());
    std::vector<std::pair<int, std::string>> stack{{static_cast<int>(hc.root()), std::string()}};
    while (!stack.empty()) {
        auto [n, prefix] = std::move(stack.back());
        stack.pop_back();
        const auto& node = nodes[static_cast<std::size_t>(n)];
        if (node.token >= 0) {
            for (auto& [id, c] : hc.codes_)
                if (id == node.token) c = prefix;
            continue;
        }
        stack.emplace_back(node.one, prefix + '1');
        stack.emplace_back(node.zero, prefix + '0');
    }
    return hc;
}

std::vector<std::pair<int, double>> candidate_pool(std::span<const double> dist, const CodecSpec& codec) {
    std::vector<std::pair<int, double>> all;
    double total = 0.0;
    for (std::size_t id = special::kCount; id < dist.size(); ++id) {
        all.emplace_back(static_cast<int>(id), dist[id]);
        total += dist[id];
    }
    if (all.empty() || !(total > 0.0)) throw DegenerateInputError("no probability mass outside the special tokens");
    for (auto& e : all) e.second /= total;
    if (codec.kind == CodecKind::bins) return all;

    const std::size_t keep = codec.kind == CodecKind::flc ? std::size_t{1} << codec.param : codec.param;
    if (keep > all.size()) throw ConfigError(codec.name() + ": candidate pool larger than the vocabulary");
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_prob_desc);
    all.resize(keep);
    if (codec.kind == CodecKind::vlc) {
        double s = 0.0;
        for (const auto& e : all) s += e.second;
        for (auto& e : all) e.second /= s;
    }
    return all;
}

StegoRecord embed(const LanguageModel& model, const CodecSpec& codec, const BitStream& payload,
                  std::size_t target_len) {
    if (target_len == 0) throw ConfigError("embed: target length must be >= 1");
    if (target_len > kMaxSequenceLength - 2) throw ConfigError("embed: target length exceeds the sequence cap");
    Chooser chooser(model, codec);
    BitStream bits = payload;
    bits.rewind();

    StegoRecord rec;
    rec.tokens.label = Label::stego;
    rec.tokens.ids.push_back(special::kBos);
    LmStepper stepper(model);
    int prev = special::kBos;
    for (std::size_t step = 0; step < target_len; ++step) {
        const std::vector<double> dist = stepper.feed(prev);
        int chosen = -1;
        unsigned read = 0;
        if (codec.kind == CodecKind::vlc) {
            const HuffmanCode hc = huffman_build(candidate_pool(dist, codec));
            std::size_t n = hc.root();
            while (hc.node(n).token < 0) {
                bool padded = false;
                const auto bit = bits.read_bit(&padded);
                if (!padded) ++rec.bits_consumed;
                ++read;
                n = static_cast<std::size_t>(bit ? hc.node(n).one : hc.node(n).zero);
            }
            chosen = hc.node(n).token;
        } else {
            unsigned real = 0;
            const auto index = static_cast<std::size_t>(bits.read_uint(codec.param, &real));
            rec.bits_consumed += real;
            read = codec.param;
            if (codec.kind == CodecKind::flc) chosen = candidate_pool(dist, codec)[index].first;
            else chosen = Chooser::bin_argmax(dist, chooser.partition.bins[index]);
        }
        rec.step_bits.push_back(read);
        rec.tokens.ids.push_back(chosen);
        prev = chosen;
    }
    rec.tokens.ids.push_back(special::kEos);
    return rec;
}

BitStream extract(const LanguageModel& model, const CodecSpec& codec, const std::vector<int>& tokens) {
    Chooser chooser(model, codec);
    std::span<const int> words(tokens);
    if (!words.empty() && words.front() == special::kBos) words = words.subspan(1);
    if (!words.empty() && words.back() == special::kEos) words = words.first(words.size() - 1);

    BitStream out;
    LmStepper stepper(model);
    int prev = special::kBos;
    for (std::size_t step = 0; step < words.size(); ++step) {
        const int w = words[step];
        if (w < special::kCount || static_cast<std::size_t>(w) >= model.config.vocab_size)
            throw DesyncError("word " + std::to_string(step + 1) + " (id " + std::to_string(w) +
                              ") cannot be produced by the generator");
        const std::vector<double> dist = stepper.feed(prev);
        if (codec.kind == CodecKind::vlc) {
            const HuffmanCode hc = huffman_build(candidate_pool(dist, codec));
            if (!hc.contains(w))
                throw DesyncError("word " + std::to_string(step + 1) + " is outside the candidate pool");
            for (char c : hc.code(w)) out.push_back(c == '1');
        } else {
            std::size_t index = 0;
            if (codec.kind == CodecKind::flc) {
                const auto pool = candidate_pool(dist, codec);
                const auto it = std::ranges::find_if(pool, [&](const auto& e) { return e.first == w; });
                if (it == pool.end())
                    throw DesyncError("word " + std::to_string(step + 1) + " is outside the candidate pool");
                index = static_cast<std::size_t>(it - pool.begin());
            } else {
                index = static_cast<std::size_t>(chooser.partition.bin_of[static_cast<std::size_t>(w)]);
                if (Chooser::bin_argmax(dist, chooser.partition.bins[index]) != w)
                    throw DesyncError("word " + std::to_string(step + 1) + " is not the best token of its bin");
            }
            for (unsigned i = codec.param; i-- > 0;) out.push_back((index >> i) & 1U);
        }
        prev = w;
    }
    return out;
}

double measure_bpw(const std::vector<StegoRecord>& records) {
    if (records.empty()) throw ConfigError("measure_bpw: no records");
    std::size_t bits = 0, words = 0;
    for (const auto& r : records) {
        bits += r.bits_consumed;
        words += r.words();
    }
    if (words == 0) throw ConfigError("measure_bpw: no words");
    return static_cast<double>(bits) / static_cast<double>(words);
}

}  // namespace lssa
