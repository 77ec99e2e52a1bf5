#include "lssa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "lssa/error.hpp"
#include "lssa/rng.hpp"

namespace lssa {

namespace {

const std::vector<std::string> kSpecialNames = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
           (c >= 123 && c <= 126);
}

// Splits `total` into per-class shares proportional to `counts` so that the
// shares sum to `total`: floor of the exact share first, leftovers to the
// largest fractional parts (lower class index wins ties).
std::vector<std::size_t> apportion(const std::vector<std::size_t>& counts, std::size_t total,
                                   double fraction) {
    std::vector<std::size_t> share(counts.size());
    std::vector<double> frac(counts.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double exact = fraction * static_cast<double>(counts[c]);
        share[c] = std::min(counts[c], static_cast<std::size_t>(std::floor(exact)));
        frac[c] = exact - std::floor(exact);
        assigned += share[c];
    }
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < total && i < order.size() * 2; ++i) {
        const std::size_t c = order[i % order.size()];
        if (share[c] < counts[c]) {
            ++share[c];
            ++assigned;
        }
    }
    return share;
}

}  // namespace

const char* label_name(Label l) noexcept { return l == Label::stego ? "stego" : "carrier"; }

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        }
    }
    flush();
    return out;
}

Vocab::Vocab() : token_of_(kSpecialNames) {
    for (int i = 0; i < special::kCount; ++i) id_of_.emplace(token_of_[i], i);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
        if (v.id_of_.contains(t)) throw ConfigError("vocab: duplicate token '" + t + "'");
        v.id_of_.emplace(t, static_cast<int>(v.token_of_.size()));
        v.token_of_.push_back(t);
    }
    return v;
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus, std::size_t cap) {
    if (cap < 5) throw ConfigError("vocab cap must be >= 5, got " + std::to_string(cap));
    std::map<std::string, std::size_t> freq;
    for (const auto& sentence : corpus)
        for (const auto& tok : sentence) ++freq[tok];
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    // `items` is already in lexicographic order; a stable sort keeps it for ties.
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const std::size_t keep = std::min(items.size(), cap - special::kCount);
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(items[i].first);
    return from_tokens(tokens);
}

int Vocab::id(std::string_view token) const {
    auto it = id_of_.find(std::string(token));
    return it == id_of_.end() ? special::kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return id_of_.contains(std::string(token)); }

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= token_of_.size())
        throw IndexError("vocab: id " + std::to_string(id) + " out of range");
    return token_of_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
    const std::size_t words = std::min(tokens.size(), kMaxSequenceLength - 2);
    std::vector<int> ids;
    ids.reserve(words + 2);
    ids.push_back(special::kBos);
    for (std::size_t i = 0; i < words; ++i) ids.push_back(id(tokens[i]));
    ids.push_back(special::kEos);
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        if (i < special::kCount && i != special::kUnk) continue;
        if (!out.empty()) out.push_back(' ');
        out += token(i);
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write vocab file " + path);
    f << "# lssa vocab: one token per line; id = line index + 4\n";
    f << "# specials: 0=<pad> 1=<unk> 2=<bos> 3=<eos>; size=" << size() << "\n";
    for (std::size_t i = special::kCount; i < token_of_.size(); ++i) f << token_of_[i] << '\n';
    if (!f) throw IoError("write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open vocab file " + path);
    std::vector<std::string> tokens;
    std::string line;
    bool header = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (header && line.rfind("# ", 0) == 0) continue;
        header = false;
        if (line.empty()) continue;
        tokens.push_back(line);
    }
    return from_tokens(tokens);
}

TokenSequence encode_text(const Vocab& vocab, std::string_view text, std::optional<Label> label) {
    return TokenSequence{vocab.encode(tokenize(text)), label};
}

SplitIndices split_indices(const std::vector<std::optional<Label>>& labels, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (n < 10) throw ConfigError("split_dataset needs at least 10 records, got " + std::to_string(n));

    // Class 0 = carrier, 1 = stego, 2 = unlabeled.
    std::vector<std::vector<std::size_t>> classes(3);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = labels[i] ? static_cast<std::size_t>(*labels[i]) : 2;
        classes[c].push_back(i);
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        Rng rng(sub_seed(seed, "split-class", c));
        rng.shuffle(classes[c]);
    }

    std::vector<std::size_t> counts;
    for (const auto& cls : classes) counts.push_back(cls.size());
    const auto test_total = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n)));
    const auto test_share = apportion(counts, test_total, 0.3);

    std::vector<std::size_t> train_counts(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) train_counts[c] = counts[c] - test_share[c];
    const std::size_t initial_train = n - test_total;
    const auto val_total =
        static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(initial_train)));
    const auto val_share = apportion(train_counts, val_total, 0.1);

    SplitIndices out;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& cls = classes[c];
        std::size_t i = 0;
        for (; i < test_share[c]; ++i) out.test.push_back(cls[i]);
        for (std::size_t j = 0; j < val_share[c]; ++j, ++i) out.validation.push_back(cls[i]);
        for (; i < cls.size(); ++i) out.train.push_back(cls[i]);
    }
    Rng mix(sub_seed(seed, "split-mix"));
    mix.shuffle(out.train);
    mix.shuffle(out.validation);
    mix.shuffle(out.test);
    return out;
}

DatasetSplit split_dataset(const std::vector<TokenSequence>& records, std::uint64_t seed) {
    std::vector<std::optional<Label>> labels;
    labels.reserve(records.size());
    for (const auto& r : records) labels.push_back(r.label);
    const auto idx = split_indices(labels, seed);
    DatasetSplit out;
    out.seed = seed;
    for (auto i : idx.train) out.train.push_back(records[i]);
    for (auto i : idx.validation) out.validation.push_back(records[i]);
    for (auto i : idx.test) out.test.push_back(records[i]);
    return out;
}

Batch make_batch(const std::vector<TokenSequence>& sequences, std::span<const std::size_t> rows) {
    Batch b;
    b.batch_size = rows.size();
    bool all_labeled = true;
    for (auto r : rows) {
        const auto& s = sequences.at(r);
        if (s.ids.size() < 2) throw ConfigError("sequence must contain at least BOS and EOS");
        b.max_len = std::max(b.max_len, s.ids.size());
        all_labeled = all_labeled && s.label.has_value();
    }
    b.ids.assign(b.batch_size * b.max_len, special::kPad);
    b.mask.assign(b.batch_size * (b.max_len - 1), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = sequences[rows[i]];
        std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.max_len));
        for (std::size_t t = 0; t + 1 < s.ids.size(); ++t) b.mask[i * (b.max_len - 1) + t] = 1;
        b.lengths.push_back(s.ids.size());
        b.source.push_back(rows[i]);
        if (all_labeled) b.labels.push_back(*s.label);
    }
    return b;
}

namespace {

std::vector<Batch> chunk(const std::vector<TokenSequence>& sequences,
                         const std::vector<std::size_t>& order, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        out.push_back(make_batch(sequences, std::span(order).subspan(start, end - start)));
    }
    return out;
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<TokenSequence>& sequences,
                                std::size_t batch_size, std::uint64_t seed) {
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    return chunk(sequences, order, batch_size);
}

std::vector<Batch> make_batches_ordered(const std::vector<TokenSequence>& sequences,
                                        std::size_t batch_size) {
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    return chunk(sequences, order, batch_size);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(line);
    }
    return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    for (const auto& l : lines) f << l << '\n';
    if (!f) throw IoError("write failed for " + path);
}

}  // namespace lssa
