#pragma once

#include <concepts>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "topos/bytes.hpp"
#include "topos/crypto.hpp"
#include "topos/rng.hpp"

namespace topos {

// A prime-order group backend supplies scalar-field and group arithmetic
// plus canonical fixed-length encodings. Protocol logic is generic over
// the backend, so the same code runs on the production curve and on the
// tiny inspection group used for hand-checkable vectors.
template <typename G>
concept GroupBackend = requires(typename G::Scalar s, typename G::Element e, CounterRng& rng,
                                const Bytes& b, const std::array<uint8_t, 64>& wide) {
    { G::scalar_zero() } -> std::same_as<typename G::Scalar>;
    { G::scalar_one() } -> std::same_as<typename G::Scalar>;
    { G::scalar_from_u64(uint64_t{}) } -> std::same_as<typename G::Scalar>;
    { G::scalar_add(s, s) } -> std::same_as<typename G::Scalar>;
    { G::scalar_sub(s, s) } -> std::same_as<typename G::Scalar>;
    { G::scalar_mul(s, s) } -> std::same_as<typename G::Scalar>;
    { G::scalar_neg(s) } -> std::same_as<typename G::Scalar>;
    { G::scalar_invert(s) } -> std::same_as<typename G::Scalar>;
    { G::scalar_from_wide(wide) } -> std::same_as<typename G::Scalar>;
    { G::random_scalar(rng) } -> std::same_as<typename G::Scalar>;
    { G::scalar_encode(s) } -> std::same_as<Bytes>;
    { G::scalar_decode(b) } -> std::same_as<std::optional<typename G::Scalar>>;
    { G::generator() } -> std::same_as<typename G::Element>;
    { G::identity() } -> std::same_as<typename G::Element>;
    { G::mul(e, e) } -> std::same_as<typename G::Element>;
    { G::inv(e) } -> std::same_as<typename G::Element>;
    { G::pow(e, s) } -> std::same_as<typename G::Element>;
    { G::base_pow(s) } -> std::same_as<typename G::Element>;
    { G::element_encode(e) } -> std::same_as<Bytes>;
    { G::element_decode(b) } -> std::same_as<std::optional<typename G::Element>>;
};

// Order-23 subgroup of (Z/47Z)* with generator 2. Small enough to check
// every arithmetic identity by hand or by exhaustion.
struct InspectionGroup {
    static constexpr uint64_t q = 23;
    static constexpr uint64_t p = 47;
    static constexpr uint64_t g = 2;

    struct Scalar {
        uint32_t v = 0;
        bool operator==(const Scalar&) const = default;
        auto operator<=>(const Scalar&) const = default;
    };
    struct Element {
        uint32_t v = 1;
        bool operator==(const Element&) const = default;
        auto operator<=>(const Element&) const = default;
    };

    static Scalar scalar_zero() { return {0}; }
    static Scalar scalar_one() { return {1}; }
    static Scalar scalar_from_u64(uint64_t v) { return {static_cast<uint32_t>(v % q)}; }
    static Scalar scalar_add(Scalar a, Scalar b) { return {static_cast<uint32_t>((a.v + b.v) % q)}; }
    static Scalar scalar_sub(Scalar a, Scalar b) { return {static_cast<uint32_t>((a.v + q - b.v) % q)}; }
    static Scalar scalar_mul(Scalar a, Scalar b) { return {static_cast<uint32_t>((uint64_t(a.v) * b.v) % q)}; }
    static Scalar scalar_neg(Scalar a) { return {static_cast<uint32_t>((q - a.v) % q)}; }
    static Scalar scalar_invert(Scalar a) {
        if (a.v == 0) throw std::invalid_argument("inverse of zero scalar");
        return {static_cast<uint32_t>(powmod(a.v, q - 2, q))};
    }
    static Scalar scalar_from_wide(const std::array<uint8_t, 64>& wide) {
        uint64_t acc = 0;
        for (int i = 0; i < 8; ++i) acc = acc << 8 | wide[i];
        return {static_cast<uint32_t>(acc % q)};
    }
    static Scalar random_scalar(CounterRng& rng) {
        return {static_cast<uint32_t>(rng.below(q))};
    }
    static Bytes scalar_encode(Scalar s) { return {static_cast<uint8_t>(s.v)}; }
    static std::optional<Scalar> scalar_decode(const Bytes& b) {
        if (b.size() != 1 || b[0] >= q) return std::nullopt;
        return Scalar{b[0]};
    }

    static Element generator() { return {g}; }
    static Element identity() { return {1}; }
    static Element mul(Element a, Element b) { return {(a.v * b.v) % static_cast<uint32_t>(p)}; }
    static Element inv(Element a) { return {static_cast<uint32_t>(powmod(a.v, p - 2, p))}; }
    static Element pow(Element base, Scalar s) {
        return {static_cast<uint32_t>(powmod(base.v, s.v, p))};
    }
    static Element base_pow(Scalar s) { return pow(generator(), s); }
    static Bytes element_encode(Element e) { return {static_cast<uint8_t>(e.v)}; }
    static std::optional<Element> element_decode(const Bytes& b) {
        if (b.size() != 1 || b[0] == 0 || b[0] >= p) return std::nullopt;
        if (powmod(b[0], q, p) != 1) return std::nullopt;  // not in the order-23 subgroup
        return Element{b[0]};
    }

    static uint64_t powmod(uint64_t base, uint64_t exp, uint64_t mod) {
        uint64_t r = 1;
        base %= mod;
        while (exp) {
            if (exp & 1) r = r * base % mod;
            base = base * base % mod;
            exp >>= 1;
        }
        return r;
    }
};

// Ristretto255 (libsodium): prime-order group, 128-bit security, 32-byte
// canonical encodings for both scalars and elements.
struct Ristretto255Group {
    struct Scalar {
        std::array<uint8_t, 32> v{};
        bool operator==(const Scalar&) const = default;
        auto operator<=>(const Scalar&) const = default;
    };
    struct Element {
        std::array<uint8_t, 32> v{};  // all-zero encoding is the identity
        bool operator==(const Element&) const = default;
        auto operator<=>(const Element&) const = default;
    };

    static Scalar scalar_zero() { return {}; }
    static Scalar scalar_one() {
        Scalar s;
        s.v[0] = 1;
        return s;
    }
    static Scalar scalar_from_u64(uint64_t x) {
        Scalar s;
        for (int i = 0; i < 8; ++i) s.v[i] = static_cast<uint8_t>(x >> (8 * i));
        return s;
    }
    static Scalar scalar_add(const Scalar& a, const Scalar& b) {
        ensure_sodium();
        Scalar r;
        crypto_core_ristretto255_scalar_add(r.v.data(), a.v.data(), b.v.data());
        return r;
    }
    static Scalar scalar_sub(const Scalar& a, const Scalar& b) {
        ensure_sodium();
        Scalar r;
        crypto_core_ristretto255_scalar_sub(r.v.data(), a.v.data(), b.v.data());
        return r;
    }
    static Scalar scalar_mul(const Scalar& a, const Scalar& b) {
        ensure_sodium();
        Scalar r;
        crypto_core_ristretto255_scalar_mul(r.v.data(), a.v.data(), b.v.data());
        return r;
    }
    static Scalar scalar_neg(const Scalar& a) {
        ensure_sodium();
        Scalar r;
        crypto_core_ristretto255_scalar_negate(r.v.data(), a.v.data());
        return r;
    }
    static Scalar scalar_invert(const Scalar& a) {
        ensure_sodium();
        Scalar r;
        if (crypto_core_ristretto255_scalar_invert(r.v.data(), a.v.data()) != 0)
            throw std::invalid_argument("inverse of zero scalar");
        return r;
    }
    static Scalar scalar_from_wide(const std::array<uint8_t, 64>& wide) {
        ensure_sodium();
        Scalar r;
        crypto_core_ristretto255_scalar_reduce(r.v.data(), wide.data());
        return r;
    }
    static Scalar random_scalar(CounterRng& rng) {
        std::array<uint8_t, 64> wide;
        rng.fill(wide.data(), wide.size());
        return scalar_from_wide(wide);
    }
    static Bytes scalar_encode(const Scalar& s) { return Bytes(s.v.begin(), s.v.end()); }
    static std::optional<Scalar> scalar_decode(const Bytes& b) {
        ensure_sodium();
        if (b.size() != 32) return std::nullopt;
        // Accept only canonical (reduced) scalars.
        std::array<uint8_t, 64> wide{};
        std::copy(b.begin(), b.end(), wide.begin());
        Scalar r;
        crypto_core_ristretto255_scalar_reduce(r.v.data(), wide.data());
        if (!std::equal(b.begin(), b.end(), r.v.begin())) return std::nullopt;
        return r;
    }

    static Element generator() {
        static const Element e = [] {
            Element r;
            crypto_scalarmult_ristretto255_base(r.v.data(), scalar_one().v.data());
            return r;
        }();
        return e;
    }
    static Element identity() { return {}; }
    static bool is_identity(const Element& e) { return e == Element{}; }
    static Element mul(const Element& a, const Element& b) {
        ensure_sodium();
        if (is_identity(a)) return b;
        if (is_identity(b)) return a;
        Element r;
        if (crypto_core_ristretto255_add(r.v.data(), a.v.data(), b.v.data()) != 0)
            throw std::invalid_argument("invalid group element");
        return r;
    }
    static Element inv(const Element& a) {
        ensure_sodium();
        if (is_identity(a)) return a;
        Element r;
        if (crypto_core_ristretto255_sub(r.v.data(), identity().v.data(), a.v.data()) != 0)
            throw std::invalid_argument("invalid group element");
        return r;
    }
    static Element pow(const Element& base, const Scalar& s) {
        ensure_sodium();
        if (s == scalar_zero() || is_identity(base)) return identity();
        Element r;
        if (crypto_scalarmult_ristretto255(r.v.data(), s.v.data(), base.v.data()) != 0)
            return identity();
        return r;
    }
    static Element base_pow(const Scalar& s) {
        ensure_sodium();
        if (s == scalar_zero()) return identity();
        Element r;
        if (crypto_scalarmult_ristretto255_base(r.v.data(), s.v.data()) != 0) return identity();
        return r;
    }
    static Bytes element_encode(const Element& e) { return Bytes(e.v.begin(), e.v.end()); }
    static std::optional<Element> element_decode(const Bytes& b) {
        ensure_sodium();
        if (b.size() != 32) return std::nullopt;
        Element e;
        std::copy(b.begin(), b.end(), e.v.begin());
        if (is_identity(e)) return e;
        if (crypto_core_ristretto255_is_valid_point(e.v.data()) != 1) return std::nullopt;
        return e;
    }
};

static_assert(GroupBackend<InspectionGroup>);
static_assert(GroupBackend<Ristretto255Group>);

// Horner evaluation of sum_j coeffs[j] x^j.
template <GroupBackend G>
typename G::Scalar poly_eval(std::span<const typename G::Scalar> coeffs,
                             const typename G::Scalar& x) {
    if (coeffs.empty()) throw std::invalid_argument("empty coefficient vector");
    typename G::Scalar acc = coeffs.back();
    for (size_t j = coeffs.size() - 1; j-- > 0;) acc = G::scalar_add(G::scalar_mul(acc, x), coeffs[j]);
    return acc;
}

template <GroupBackend G>
typename G::Scalar poly_eval(const std::vector<typename G::Scalar>& coeffs,
                             const typename G::Scalar& x) {
    return poly_eval<G>(std::span<const typename G::Scalar>(coeffs), x);
}

// Lagrange coefficient lambda_i at zero for the index set S:
// prod_{j in S, j != i} j * (j - i)^{-1}.
template <GroupBackend G>
typename G::Scalar lagrange_coeff(const std::set<uint32_t>& S, uint32_t i) {
    if (!S.contains(i)) throw std::invalid_argument("index not in signer set");
    if (S.contains(0)) throw std::invalid_argument("zero index in signer set");
    auto num = G::scalar_one();
    auto den = G::scalar_one();
    const auto si = G::scalar_from_u64(i);
    for (uint32_t j : S) {
        if (j == i) continue;
        const auto sj = G::scalar_from_u64(j);
        num = G::scalar_mul(num, sj);
        den = G::scalar_mul(den, G::scalar_sub(sj, si));
    }
    return G::scalar_mul(num, G::scalar_invert(den));
}

// Deterministic hash into Z_q^*; distinct domain tags give independent
// functions (one per protocol role: challenge, binding, commitment).
template <GroupBackend G>
typename G::Scalar hash_to_scalar(const std::string& domain_tag, const Bytes& data) {
    auto s = G::scalar_from_wide(tagged_hash64(domain_tag, data));
    if (s == G::scalar_zero()) s = G::scalar_one();
    return s;
}

template <GroupBackend G>
typename G::Scalar random_nonzero_scalar(CounterRng& rng) {
    for (;;) {
        auto s = G::random_scalar(rng);
        if (!(s == G::scalar_zero())) return s;
    }
}

// Pairwise channel key from a Diffie-Hellman group element.
template <GroupBackend G>
SymmetricKey derive_symmetric_key(const typename G::Element& dh) {
    Digest32 h = tagged_hash("tce/kdf", G::element_encode(dh));
    SymmetricKey k;
    std::copy(h.begin(), h.end(), k.begin());
    return k;
}

template <GroupBackend G>
std::string scalar_hex(const typename G::Scalar& s) { return to_hex(G::scalar_encode(s)); }

template <GroupBackend G>
std::string element_hex(const typename G::Element& e) { return to_hex(G::element_encode(e)); }

}  // namespace topos
