#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lssa/bitstream.hpp"
#include "lssa/error.hpp"
#include "lssa/matrix.hpp"
#include "lssa/optim.hpp"
#include "lssa/rng.hpp"

using namespace lssa;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
    return m;
}

// Reference SplitMix64 written from the published algorithm.
struct SplitMixRef {
    std::uint64_t x;
    std::uint64_t next() {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

}  // namespace

TEST_CASE("matmul small cases") {
    const Matrix m{{1, 2}, {3, 4}};
    CHECK(matmul(Matrix::identity(2), m) == m);
    CHECK(matmul(m, Matrix(2, 2)) == Matrix(2, 2));
    CHECK(matmul(m, Matrix{{5, 6}, {7, 8}}) == Matrix{{19, 22}, {43, 50}});
    CHECK_THROWS_AS(matmul(m, Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul kernels equal the naive loop bit for bit") {
    Rng rng(11);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 70, 129}, {5, 256, 4}}) {
        const Matrix a = random_matrix(rng, m, k), b = random_matrix(rng, k, n);
        CHECK(matmul(a, b) == naive_matmul(a, b));
        CHECK(matmul_at(transpose(a), b) == naive_matmul(a, b));
        CHECK(matmul_bt(a, transpose(b)) == naive_matmul(a, b));
    }
}

TEST_CASE("gemm accumulate adds onto the output") {
    Rng rng(3);
    const Matrix a = random_matrix(rng, 6, 10), b = random_matrix(rng, 10, 5);
    Matrix c(6, 5, 0.0);
    gemm_nn(a.data(), b.data(), c.data(), 6, 10, 5, false);
    CHECK(c == naive_matmul(a, b));
    Matrix acc(6, 5, 1.0);
    gemm_nn(a.data(), b.data(), acc.data(), 6, 10, 5, true);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(acc.data()[i] == doctest::Approx(c.data()[i] + 1.0));
}

TEST_CASE("softmax") {
    auto p = softmax_row(std::vector<double>{0.0, 0.0});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);

    for (double c : {-7.0, 0.0, 3.5, 900.0}) {
        p = softmax_row(std::vector<double>{c, c + std::log(3.0)});
        CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
    }

    const auto big = softmax_row(std::vector<double>{1000.0, 1001.0});
    const auto small = softmax_row(std::vector<double>{0.0, 1.0});
    CHECK(std::isfinite(big[0]));
    CHECK(std::abs(big[0] - small[0]) < 1e-15);

    CHECK_THROWS_AS(softmax_row(std::vector<double>{}), ShapeError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> logits(1 + rng.below(50));
        for (double& x : logits) x = rng.uniform(-30.0, 30.0);
        const auto p = softmax_row(logits);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
        const double shift = rng.uniform(-100.0, 100.0);
        for (double& x : logits) x += shift;
        const auto q = softmax_row(logits);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
}

TEST_CASE("cross entropy") {
    CHECK(cross_entropy(std::vector<double>{0.0, 1.0, 0.0}, 1) == 0.0);
    CHECK(cross_entropy(std::vector<double>{0.5, 0.5}, 0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(cross_entropy(std::vector<double>{0.1, 0.9}, 0) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.5, 0.5}, 2), IndexError);

    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> logits(4);
        for (double& x : logits) x = rng.uniform(-5, 5);
        const auto p = softmax_row(logits);
        CHECK(cross_entropy(p, rng.below(4)) > 0.0);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves the value and counts the step") {
        ParamBlock b(2, 3);
        b.value.fill(0.25);
        adam_step(b);
        CHECK(b.value == Matrix(2, 3, 0.25));
        CHECK(b.step == 1);
        adam_step(b);
        CHECK(b.step == 2);
    }
    SUBCASE("first step moves by about lr") {
        ParamBlock b(1, 1);
        b.value(0, 0) = 1.0;
        b.grad(0, 0) = 1.0;
        adam_step(b, {});
        CHECK(1.0 - b.value(0, 0) == doctest::Approx(1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(b.grad(0, 0) == 0.0);
    }
    SUBCASE("identical blocks stay identical") {
        ParamBlock a(3, 3), c(3, 3);
        Rng rng(2);
        for (int s = 0; s < 5; ++s) {
            for (std::size_t i = 0; i < 9; ++i) a.grad.data()[i] = c.grad.data()[i] = rng.uniform(-1, 1);
            adam_step(a);
            adam_step(c);
        }
        CHECK(a.value == c.value);
        CHECK(a.adam_v == c.adam_v);
    }
    SUBCASE("mismatched buffers") {
        ParamBlock b(2, 2);
        b.adam_m = Matrix(1, 2);
        CHECK_THROWS_AS(adam_step(b), ShapeError);
    }
}

TEST_CASE("gradient clipping bounds the global norm") {
    ParamBlock a(2, 2), b(1, 3);
    Rng rng(4);
    for (double& x : a.grad.data()) x = rng.uniform(-10, 10);
    for (double& x : b.grad.data()) x = rng.uniform(-10, 10);
    const std::vector<NamedParam> ps{{"a", &a}, {"b", &b}};
    const double before = grad_global_norm(ps);
    CHECK(clip_grad_norm(ps, 5.0) == doctest::Approx(before));
    CHECK(grad_global_norm(ps) <= 5.0 + 1e-9);

    ParamBlock s(1, 1);
    s.grad(0, 0) = 0.5;
    const std::vector<NamedParam> one{{"s", &s}};
    clip_grad_norm(one, 5.0);
    CHECK(s.grad(0, 0) == 0.5);
}

TEST_CASE("rng matches a reference SplitMix64") {
    // Published test vector for seed 1234567.
    Rng r(1234567);
    CHECK(r.next_u64() == 6457827717110365317ULL);
    CHECK(r.next_u64() == 3203168211198807973ULL);
    CHECK(r.next_u64() == 9817491932198370423ULL);
    CHECK(r.next_u64() == 4593380528125082431ULL);
    CHECK(r.next_u64() == 16408922859458223821ULL);

    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xffffffffffffffffULL}) {
        Rng a(seed);
        SplitMixRef ref{seed};
        for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == ref.next());
    }
}

TEST_CASE("rng helpers") {
    Rng r(9);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.below(7) < 7);
    }
    CHECK(sub_seed(5, "x") == sub_seed(5, "x"));
    CHECK(sub_seed(5, "x") != sub_seed(5, "y"));
    CHECK(sub_seed(5, "x") != sub_seed(6, "x"));
    CHECK(sub_seed(5, "x", 0) != sub_seed(5, "x", 1));
    // FNV-1a 64 reference values.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(sub_seed(77, fnv1a64("purpose")) == sub_seed(77, "purpose"));
    CHECK(sub_seed(77, 5) == SplitMixRef{77 ^ 5ULL}.next());

    std::vector<int> v(20);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    Rng(3).shuffle(v);
    Rng(3).shuffle(w);
    CHECK(v == w);
    std::sort(w.begin(), w.end());
    CHECK(w[19] == 19);
}

TEST_CASE("rng_bits") {
    Rng e(1);
    CHECK(rng_bits(e, 0).empty());

    Rng a(77), b(77);
    CHECK(rng_bits(a, 64) == rng_bits(b, 64));

    Rng s(2024);
    const BitStream bits = rng_bits(s, 64);
    const std::uint64_t word = SplitMixRef{2024}.next();
    for (unsigned i = 0; i < 64; ++i) CHECK(bits[i] == ((word >> (63 - i)) & 1U));
}

TEST_CASE("bitstream") {
    BitStream bs = BitStream::from_bytes(std::vector<std::uint8_t>{0xA5, 0x01});
    CHECK(bs.to_string() == "1010010100000001");
    CHECK(bs.to_bytes() == std::vector<std::uint8_t>{0xA5, 0x01});
    CHECK(bs.read_uint(3) == 5);
    CHECK(bs.cursor() == 3);

    BitStream tail = BitStream::from_string("101");
    unsigned real = 0;
    CHECK(tail.read_uint(5, &real) == 0b10100);
    CHECK(real == 3);
    CHECK(tail.exhausted());
    bool padded = false;
    CHECK(tail.read_bit(&padded) == 0);
    CHECK(padded);

    CHECK(BitStream::from_string("1").to_bytes() == std::vector<std::uint8_t>{0x80});
    CHECK(BitStream::from_string("10110").starts_with(BitStream::from_string("101")));
    CHECK_FALSE(BitStream::from_string("10").starts_with(BitStream::from_string("101")));
}
