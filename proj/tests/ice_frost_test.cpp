#include <catch2/catch_amalgamated.hpp>

#include "topos/ice_frost.hpp"

using namespace topos;
using namespace topos::ice_frost;
using IG = InspectionGroup;
using RG = Ristretto255Group;

namespace {

Context ctx(const std::string& id, uint64_t epoch = 0) {
    return Context{id, epoch, Bytes{0x01}};
}

template <GroupBackend G>
std::vector<std::set<Index>> all_subsets(const std::set<Index>& of, uint32_t size) {
    std::vector<Index> v(of.begin(), of.end());
    std::vector<bool> pick(v.size(), false);
    std::fill(pick.end() - size, pick.end(), true);
    std::vector<std::set<Index>> out;
    do {
        std::set<Index> s;
        for (size_t i = 0; i < v.size(); ++i)
            if (pick[i]) s.insert(v[i]);
        out.push_back(s);
    } while (std::next_permutation(pick.begin(), pick.end()));
    return out;
}

}  // namespace

TEST_CASE("keygen round1 commitment matches direct exponentiation (inspection)") {
    // a_{i0} = 7 commits to 2^7 mod 47 = 34.
    CHECK(IG::base_pow(IG::Scalar{7}).v == 34);
}

TEMPLATE_TEST_CASE("honest keygen: all parties agree on Y and shares interpolate", "", IG, RG) {
    using G = TestType;
    CounterRng rng(1);
    auto res = run_keygen<G>(2, 3, ctx("kg"), rng);
    REQUIRE(!res.aborted);
    REQUIRE(res.keys.size() == 3);
    CHECK(res.excluded.empty());
    auto Y = res.keys.at(1).group_key;
    for (const auto& [i, km] : res.keys) {
        CHECK(km.group_key == Y);
        CHECK(km.verification_share == G::base_pow(km.share));
        // transcript-computed verification share matches the holder's own
        CHECK(compute_verification_share<G>(res.transcript, km.holders, i) ==
              km.verification_share);
    }
    // any 2 of 3 shares interpolate to the same secret with g^secret = Y
    for (const auto& S : all_subsets<G>({1, 2, 3}, 2)) {
        auto secret = G::scalar_zero();
        for (Index i : S)
            secret = G::scalar_add(
                secret, G::scalar_mul(lagrange_coeff<G>(S, i), res.keys.at(i).share));
        CHECK(G::base_pow(secret) == Y);
    }
}

TEST_CASE("degenerate t=1 n=1 keygen reduces to a single Schnorr key") {
    CounterRng rng(2);
    auto res = run_keygen<IG>(1, 1, ctx("kg1"), rng);
    REQUIRE(!res.aborted);
    auto& km = res.keys.at(1);
    CHECK(km.group_key == IG::base_pow(km.share));
    CHECK(km.group_key == res.transcript.round1.at(1).commitments[0]);
}

TEST_CASE("round1 proof of knowledge") {
    CounterRng rng(3);
    KeygenParams params;
    params.t = 2;
    params.dealers = {1, 2, 3};
    params.receivers = {1, 2, 3};
    params.ctx = ctx("pok");
    KeygenSession<IG> s1(params, 1, rng.fork("s", 1));
    KeygenSession<IG> s2(params, 2, rng.fork("s", 2));
    auto msg = s1.round1();

    SECTION("honest payload accepted") {
        CHECK(s2.receive_round1(msg));
        CHECK(s2.excluded().empty());
    }
    SECTION("perturbed mu rejected, sender recorded malicious") {
        msg.secret_pok.mu = IG::scalar_add(msg.secret_pok.mu, IG::scalar_one());
        CHECK(!s2.receive_round1(msg));
        CHECK(s2.excluded().contains(1));
    }
    SECTION("proofs are context-bound: replay under another Phi rejected") {
        auto params2 = params;
        params2.ctx = ctx("pok-other");
        KeygenSession<IG> other(params2, 2, rng.fork("s", 4));
        CHECK(!other.receive_round1(msg));
        CHECK(other.excluded().contains(1));
    }
    SECTION("wrong commitment vector length rejected") {
        msg.commitments.push_back(IG::generator());
        CHECK(!s2.receive_round1(msg));
    }
    SECTION("self-consistency: emitted proof verifies locally") {
        CHECK(verify_pok<IG>("tce/pok-secret", 1, params.ctx, msg.commitments[0],
                             msg.secret_pok));
        CHECK(verify_pok<IG>("tce/pok-key", 1, params.ctx, msg.eph_pk, msg.key_pok));
    }
}

TEST_CASE("round2 share exchange") {
    CounterRng rng(4);
    KeygenParams params;
    params.t = 2;
    params.dealers = {1, 2, 3};
    params.receivers = {1, 2, 3};
    params.ctx = ctx("r2");
    std::map<Index, KeygenSession<IG>> s;
    for (Index i : {1u, 2u, 3u}) s.emplace(i, KeygenSession<IG>(params, i, rng.fork("s", i)));
    std::map<Index, Round1Broadcast<IG>> r1;
    for (auto& [i, sess] : s) r1[i] = sess.round1();
    for (auto& [i, sess] : s)
        for (auto& [j, msg] : r1) sess.receive_round1(msg);
    for (auto& [i, sess] : s) REQUIRE(sess.begin_round2());

    SECTION("honest share accepted") {
        auto e = s.at(1).round2_send(2);
        auto res = s.at(2).round2_receive(1, e);
        CHECK(std::holds_alternative<std::monostate>(res));
    }
    SECTION("DH symmetry: both directions decrypt") {
        auto e12 = s.at(1).round2_send(2);
        auto e21 = s.at(2).round2_send(1);
        CHECK(std::holds_alternative<std::monostate>(s.at(2).round2_receive(1, e12)));
        CHECK(std::holds_alternative<std::monostate>(s.at(1).round2_receive(2, e21)));
    }
    SECTION("third party cannot decrypt") {
        auto e = s.at(1).round2_send(2);
        // process 3 guesses with its own pairwise key; authentication fails
        auto res = s.at(3).round2_receive(1, e);
        CHECK(std::holds_alternative<Complaint<IG>>(res));
    }
    SECTION("ciphertext bit-flip produces a complaint") {
        auto e = s.at(1).round2_send(2);
        e.back() ^= 1;
        auto res = s.at(2).round2_receive(1, e);
        CHECK(std::holds_alternative<Complaint<IG>>(res));
    }
    SECTION("wrong share under correct key produces a complaint that convicts the dealer") {
        auto e = s.at(1).round2_send_corrupted(2);
        auto res = s.at(2).round2_receive(1, e);
        REQUIRE(std::holds_alternative<Complaint<IG>>(res));
        KeygenTranscript<IG> tr{params.t, params.ctx, r1, {{{1, 2}, e}}};
        auto verdict = adjudicate_complaint<IG>(std::get<Complaint<IG>>(res), tr);
        CHECK(verdict.excluded == 1);
    }
}

TEST_CASE("complaint adjudication verdicts") {
    CounterRng rng(5);
    KeygenParams params;
    params.t = 2;
    params.dealers = {1, 2, 3};
    params.receivers = {1, 2, 3};
    params.ctx = ctx("adj");
    std::map<Index, KeygenSession<IG>> s;
    for (Index i : {1u, 2u, 3u}) s.emplace(i, KeygenSession<IG>(params, i, rng.fork("s", i)));
    KeygenTranscript<IG> tr;
    tr.t = params.t;
    tr.ctx = params.ctx;
    for (auto& [i, sess] : s) tr.round1[i] = sess.round1();
    for (auto& [i, sess] : s)
        for (auto& [j, msg] : tr.round1) sess.receive_round1(msg);
    for (auto& [i, sess] : s) REQUIRE(sess.begin_round2());

    SECTION("bogus complaint against an honest dealer excludes the accuser") {
        tr.ciphertexts[{1, 2}] = s.at(1).round2_send(2);
        auto c = s.at(2).forge_complaint(1);
        auto v = adjudicate_complaint<IG>(c, tr);
        CHECK(v.excluded == 2);
    }
    SECTION("invalid dh proof excludes the accuser") {
        tr.ciphertexts[{1, 2}] = s.at(1).round2_send_corrupted(2);
        auto c = s.at(2).forge_complaint(1);
        c.proof.z = IG::scalar_add(c.proof.z, IG::scalar_one());
        auto v = adjudicate_complaint<IG>(c, tr);
        CHECK(v.excluded == 2);
    }
    SECTION("missing published ciphertext convicts the dealer") {
        auto c = s.at(2).forge_complaint(1);
        auto v = adjudicate_complaint<IG>(c, tr);  // no entry ((1,2), e)
        CHECK(v.excluded == 1);
    }
}

TEST_CASE("scripted keygen misbehavior ends with consistent exclusion and Y") {
    SECTION("bad share") {
        CounterRng rng(6);
        KeygenMisbehavior mis;
        mis.bad_share[2] = 3;
        auto res = run_keygen<RG>(2, 4, ctx("mis1"), rng, mis);
        REQUIRE(!res.aborted);
        CHECK(res.excluded == std::set<Index>{2});
        auto Y = res.keys.begin()->second.group_key;
        for (auto& [i, km] : res.keys) CHECK(km.group_key == Y);
    }
    SECTION("bad proof of knowledge") {
        CounterRng rng(7);
        KeygenMisbehavior mis;
        mis.bad_secret_pok = {4};
        auto res = run_keygen<RG>(2, 4, ctx("mis2"), rng, mis);
        REQUIRE(!res.aborted);
        CHECK(res.excluded == std::set<Index>{4});
        auto Y = res.keys.begin()->second.group_key;
        for (auto& [i, km] : res.keys) CHECK(km.group_key == Y);
        CHECK(res.keys.size() == 3);
    }
    SECTION("bogus complaint excludes the accuser everywhere") {
        CounterRng rng(8);
        KeygenMisbehavior mis;
        mis.bogus_complaint[3] = 1;
        auto res = run_keygen<RG>(2, 4, ctx("mis3"), rng, mis);
        REQUIRE(!res.aborted);
        CHECK(res.excluded == std::set<Index>{3});
        for (auto& [i, km] : res.keys) CHECK(!km.holders.contains(3));
    }
    SECTION("withheld ciphertexts convict the dealer") {
        CounterRng rng(9);
        KeygenMisbehavior mis;
        mis.withhold_ciphertext = {1};
        auto res = run_keygen<RG>(2, 4, ctx("mis4"), rng, mis);
        REQUIRE(!res.aborted);
        CHECK(res.excluded == std::set<Index>{1});
    }
    SECTION("excluding a dealer changes Y but honest parties still agree") {
        CounterRng rng_a(10), rng_b(10);
        auto honest = run_keygen<RG>(2, 4, ctx("mis5"), rng_a);
        KeygenMisbehavior mis;
        mis.bad_secret_pok = {2};
        auto faulty = run_keygen<RG>(2, 4, ctx("mis5"), rng_b, mis);
        REQUIRE(!faulty.aborted);
        CHECK(!(honest.keys.at(1).group_key == faulty.keys.at(1).group_key));
    }
    SECTION("too many exclusions aborts") {
        CounterRng rng(11);
        KeygenMisbehavior mis;
        mis.bad_secret_pok = {1, 2};
        auto res = run_keygen<RG>(2, 3, ctx("mis6"), rng, mis);
        CHECK(res.aborted);
    }
}

TEMPLATE_TEST_CASE("signing: every t-subset verifies under the same Y", "", IG, RG) {
    using G = TestType;
    CounterRng rng(12);
    auto kg = run_keygen<G>(2, 3, ctx("sign"), rng);
    REQUIRE(!kg.aborted);
    Bytes m{'h', 'i'};
    auto Y = kg.keys.at(1).group_key;
    for (const auto& S : all_subsets<G>({1, 2, 3}, 2)) {
        auto sig = threshold_sign<G>(kg.keys, S, m, rng);
        REQUIRE(sig.has_value());
        CHECK(verify_signature<G>(Y, m, *sig));
        CHECK(!verify_signature<G>(Y, Bytes{'h', 'o'}, *sig));
        auto bad = *sig;
        bad.z = G::scalar_add(bad.z, G::scalar_one());
        CHECK(!verify_signature<G>(Y, m, bad));
    }
}

TEST_CASE("t=n=1 signing reduces to plain Schnorr") {
    CounterRng rng(13);
    auto kg = run_keygen<RG>(1, 1, ctx("schnorr"), rng);
    Bytes m{'x'};
    auto sig = threshold_sign<RG>(kg.keys, {1}, m, rng);
    REQUIRE(sig.has_value());
    CHECK(verify_signature<RG>(kg.keys.at(1).group_key, m, *sig));
    // lambda_1 over S={1} is 1
    CHECK(lagrange_coeff<RG>({1}, 1) == RG::scalar_one());
}

TEST_CASE("signing session enforces single-use nonces") {
    CounterRng rng(14);
    auto kg = run_keygen<RG>(2, 3, ctx("nonce"), rng);
    SigningSession<RG> sess(kg.keys.at(1), {1, 2});
    auto nc = sess.round1(rng);
    CHECK(RG::element_decode(RG::element_encode(nc.D)).has_value());
    CHECK_THROWS_AS(sess.round1(rng), std::logic_error);
    // two sessions yield distinct commitments
    SigningSession<RG> sess2(kg.keys.at(1), {1, 2});
    auto nc2 = sess2.round1(rng);
    CHECK(!(nc.D == nc2.D));
    CHECK(!(nc.E == nc2.E));
}

TEST_CASE("bad response: signer identified, excluded, and retry completes") {
    CounterRng rng(15);
    auto kg = run_keygen<RG>(2, 3, ctx("badresp"), rng);
    Bytes m{'m'};
    SigningOutcome outcome;
    auto tamper = [](Index i, RG::Scalar& z) {
        if (i == 2) z = RG::scalar_add(z, RG::scalar_one());
    };
    auto sig = threshold_sign<RG>(kg.keys, {1, 2, 3}, m, rng, tamper, &outcome);
    REQUIRE(sig.has_value());
    CHECK(outcome.excluded == std::set<Index>{2});
    CHECK(outcome.rounds == 2);
    CHECK(verify_signature<RG>(kg.keys.at(1).group_key, m, *sig));
}

TEST_CASE("signing aborts below threshold") {
    CounterRng rng(16);
    auto kg = run_keygen<RG>(3, 5, ctx("abort"), rng);
    Bytes m{'m'};
    auto tamper = [](Index i, RG::Scalar& z) {
        if (i != 5) z = RG::scalar_add(z, RG::scalar_one());
    };
    auto sig = threshold_sign<RG>(kg.keys, {1, 2, 3, 4, 5}, m, rng, tamper);
    CHECK(!sig.has_value());
}

TEMPLATE_TEST_CASE("share refresh keeps the group key static", "", IG, RG) {
    using G = TestType;
    CounterRng rng(17);
    auto kg = run_keygen<G>(2, 3, ctx("refresh", 0), rng);
    REQUIRE(!kg.aborted);
    auto Y = kg.keys.at(1).group_key;

    auto ref = run_refresh<G>(kg.keys, {1, 2, 3}, 2, ctx("refresh", 1), rng);
    REQUIRE(!ref.aborted);
    REQUIRE(ref.keys.size() == 3);
    for (auto& [i, km] : ref.keys) {
        CHECK(km.group_key == Y);
        CHECK(km.epoch == 1);
        // shares actually changed
        CHECK(!(km.share == kg.keys.at(i).share));
    }
    // t-of-n signing under the refreshed shares verifies under the old Y
    Bytes m{'r'};
    auto sig = threshold_sign<G>(ref.keys, {1, 3}, m, rng);
    REQUIRE(sig.has_value());
    CHECK(verify_signature<G>(Y, m, *sig));
}

TEST_CASE("refresh supports membership change") {
    CounterRng rng(18);
    auto kg = run_keygen<RG>(2, 3, ctx("churn", 0), rng);
    auto Y = kg.keys.at(1).group_key;
    // members {1,2,3} -> {2,3,4,5}
    auto ref = run_refresh<RG>(kg.keys, {2, 3, 4, 5}, 2, ctx("churn", 1), rng);
    REQUIRE(!ref.aborted);
    REQUIRE(ref.keys.size() == 4);
    for (auto& [i, km] : ref.keys) CHECK(km.group_key == Y);
    Bytes m{'c'};
    auto sig = threshold_sign<RG>(ref.keys, {4, 5}, m, rng);
    REQUIRE(sig.has_value());
    CHECK(verify_signature<RG>(Y, m, *sig));
}

TEST_CASE("zero-sharing commitment: dealer's constant beyond the pinned term is identity") {
    CounterRng rng(19);
    auto kg = run_keygen<IG>(2, 3, ctx("zero", 0), rng);
    auto ref = run_refresh<IG>(kg.keys, {1, 2, 3}, 2, ctx("zero", 1), rng);
    REQUIRE(!ref.aborted);
    std::set<Index> dealers{1, 2, 3};
    for (Index l : dealers) {
        auto lambda = lagrange_coeff<IG>(dealers, l);
        auto pinned = IG::pow(kg.keys.at(l).verification_share, lambda);
        auto phi0 = ref.transcript.round1.at(l).commitments[0];
        // phi_{l0} * (Y_l^{lambda_l})^{-1} = g^0
        CHECK(IG::mul(phi0, IG::inv(pinned)) == IG::identity());
    }
}

TEST_CASE("mixing shares across epochs breaks signatures") {
    CounterRng rng(20);
    auto kg = run_keygen<RG>(2, 3, ctx("mix", 0), rng);
    auto ref = run_refresh<RG>(kg.keys, {1, 2, 3}, 2, ctx("mix", 1), rng);
    REQUIRE(!ref.aborted);
    auto Y = kg.keys.at(1).group_key;
    Bytes m{'z'};
    // signer 1 uses a stale epoch-0 share, signer 2 a fresh one
    std::map<Index, KeyMaterial<RG>> mixed;
    mixed[1] = kg.keys.at(1);
    mixed[2] = ref.keys.at(2);
    std::set<Index> S{1, 2};
    std::map<Index, SigningSession<RG>> sess;
    std::vector<NonceCommitment<RG>> B;
    for (Index i : S) {
        auto [it, _] = sess.emplace(i, SigningSession<RG>(mixed.at(i), S));
        B.push_back(it->second.round1(rng));
    }
    std::vector<SignatureResponse<RG>> responses;
    for (Index i : S) responses.push_back(sess.at(i).round2(m, B));
    auto sig = aggregate_unchecked<RG>(B, m, Y, responses);
    CHECK(!verify_signature<RG>(Y, m, sig));
    // and the per-response check against fresh verification shares flags it
    std::map<Index, RG::Element> vs{{1, ref.keys.at(1).verification_share},
                                    {2, ref.keys.at(2).verification_share}};
    auto agg = aggregate<RG>(B, m, Y, vs, responses);
    CHECK(!agg.signature.has_value());
    CHECK(agg.bad_signers == std::vector<Index>{1});
}

TEST_CASE("three consecutive refreshes with churn keep Y bit-for-bit") {
    CounterRng rng(21);
    auto kg = run_keygen<RG>(2, 3, ctx("tri", 0), rng);
    auto Y0 = RG::element_encode(kg.keys.at(1).group_key);
    std::map<Index, KeyMaterial<RG>> cur = kg.keys;
    std::vector<std::set<Index>> memberships{{1, 2, 4}, {2, 4, 5, 6}, {4, 5, 6}};
    for (size_t e = 0; e < memberships.size(); ++e) {
        auto ref = run_refresh<RG>(cur, memberships[e], 2, ctx("tri", e + 1), rng);
        REQUIRE(!ref.aborted);
        for (auto& [i, km] : ref.keys)
            CHECK(RG::element_encode(km.group_key) == Y0);
        cur = ref.keys;
    }
    Bytes m{'t'};
    auto sig = threshold_sign<RG>(cur, {5, 6}, m, rng);
    REQUIRE(sig.has_value());
    auto Y = RG::element_decode(Y0);
    CHECK(verify_signature<RG>(*Y, m, *sig));
}

TEST_CASE("verification share off-support is still well-defined") {
    CounterRng rng(22);
    auto kg = run_keygen<IG>(2, 3, ctx("off"), rng);
    auto y9 = compute_verification_share<IG>(kg.transcript, kg.keys.at(1).holders, 9);
    CHECK(IG::element_decode(IG::element_encode(y9)).has_value());
}

TEST_CASE("tampered transcript commitment breaks the verification-share equality") {
    CounterRng rng(23);
    auto kg = run_keygen<IG>(2, 3, ctx("tamper"), rng);
    auto tr = kg.transcript;
    auto& phi = tr.round1.at(2).commitments[1];
    phi = IG::mul(phi, IG::generator());
    CHECK(!(compute_verification_share<IG>(tr, kg.keys.at(1).holders, 1) ==
            kg.keys.at(1).verification_share));
}
