#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lssa {

/// Knobs of the synthetic corpus generator.
struct SynthParams {
    std::size_t sentences = 10000;
    std::size_t types = 2000;       ///< distinct word forms
    std::size_t classes = 40;       ///< latent word classes driving the Markov chain
    std::size_t successors = 4;     ///< next classes reachable from each two-class context
    double mean_length = 10.0;      ///< mean words per sentence
    double zipf_exponent = 1.0;     ///< word frequency skew inside a class
};

/// Deterministic word form of type `index` (lowercase CV syllables).
std::string synth_word(std::size_t index);

/// Second-order Markov generator: the class of each word depends on the two
/// previous classes, the word is drawn Zipf-like from its class, and the
/// sentence length is 1 + Poisson(mean_length - 1) capped at 62.
/// Throws ConfigError for fewer than 100 sentences or inconsistent sizes.
std::vector<std::string> synth_corpus(std::uint64_t seed, const SynthParams& params);

}  // namespace lssa
