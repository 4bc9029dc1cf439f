#include <cmath>

#include <catch_amalgamated.hpp>

#include "openncd/prototypes.hpp"
#include "openncd/rng.hpp"

using namespace openncd;
using Catch::Approx;

namespace {

// Bank whose rows give chosen dot products against the fixed query [1, 0].
PrototypeBank bank_with_sims(const std::vector<double>& sims, double temperature) {
    PrototypeBank bank;
    bank.temperature = temperature;
    bank.vectors = Matrix(static_cast<int>(sims.size()), 2);
    for (size_t k = 0; k < sims.size(); ++k) {
        bank.vectors(static_cast<int>(k), 0) = sims[k];
        bank.vectors(static_cast<int>(k), 1) = std::sqrt(std::max(0.0, 1.0 - sims[k] * sims[k]));
    }
    return bank;
}

Matrix unit_query() {
    Matrix z(1, 2);
    z(0, 0) = 1.0;
    return z;
}

GroupPartition partition_of(std::vector<int> ids) {
    GroupPartition p;
    p.group_of = std::move(ids);
    p.group_count = 0;
    for (int g : p.group_of) p.group_count = std::max(p.group_count, g + 1);
    p.validate();
    return p;
}

}  // namespace

TEST_CASE("assignment matches the closed-form softmax", "[prototypes]") {
    const Matrix z = unit_query();
    // dot products 1 and 0 at tau = 1
    AssignmentMatrix p = assign_prototypes(z, bank_with_sims({1.0, 0.0}, 1.0));
    REQUIRE(p.probs(0, 0) == Approx(0.7310585786300049).margin(1e-9));
    REQUIRE(p.probs(0, 1) == Approx(0.2689414213699951).margin(1e-9));

    // same geometry at tau = 0.1
    p = assign_prototypes(z, bank_with_sims({1.0, 0.0}, 0.1));
    REQUIRE(p.probs(0, 0) == Approx(0.9999546021312976).margin(1e-9));
    REQUIRE(p.probs(0, 1) == Approx(4.5397868702390376e-05).margin(1e-11));
}

TEST_CASE("equidistant prototypes give a uniform row", "[prototypes]") {
    const Matrix z = unit_query();
    const AssignmentMatrix p = assign_prototypes(z, bank_with_sims({0.5, 0.5, 0.5, 0.5}, 0.2));
    for (int k = 0; k < 4; ++k) REQUIRE(p.probs(0, k) == Approx(0.25).margin(1e-12));
}

TEST_CASE("assignment rows are positive and sum to one", "[prototypes]") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 2 + static_cast<int>(rng.below(12));
        const int d = 2 + static_cast<int>(rng.below(6));
        PrototypeBank bank = init_prototypes(K, d, 0.05 + rng.uniform(), trial);
        Matrix z(3, d);
        for (int i = 0; i < 3; ++i) {
            const auto v = rng.unit_sphere(d);
            for (int j = 0; j < d; ++j) z(i, j) = v[j];
        }
        const AssignmentMatrix p = assign_prototypes(z, bank);
        for (int i = 0; i < p.rows(); ++i) {
            double sum = 0.0;
            for (int k = 0; k < K; ++k) {
                REQUIRE(p.probs(i, k) > 0.0);
                sum += p.probs(i, k);
            }
            REQUIRE(sum == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("lowering the temperature sharpens the winning entry", "[prototypes]") {
    const Matrix z = unit_query();
    const AssignmentMatrix warm = assign_prototypes(z, bank_with_sims({0.9, 0.2, -0.4}, 0.5));
    const AssignmentMatrix cold = assign_prototypes(z, bank_with_sims({0.9, 0.2, -0.4}, 0.1));
    REQUIRE(cold.probs(0, 0) > warm.probs(0, 0));
}

TEST_CASE("softmax is invariant to a constant similarity shift", "[prototypes]") {
    // Shift every dot product by adding a shared third coordinate offset.
    Matrix z(1, 3);
    z(0, 0) = 1.0;
    z(0, 2) = 1.0;  // picks up the shared offset coordinate
    PrototypeBank base, shifted;
    base.temperature = shifted.temperature = 0.3;
    base.vectors = Matrix(3, 3);
    shifted.vectors = Matrix(3, 3);
    const std::vector<double> sims = {0.8, 0.1, -0.5};
    for (int k = 0; k < 3; ++k) {
        base.vectors(k, 0) = sims[k];
        shifted.vectors(k, 0) = sims[k];
        shifted.vectors(k, 2) = 0.37;  // same constant added to every similarity
    }
    const AssignmentMatrix a = assign_prototypes(z, base);
    const AssignmentMatrix b = assign_prototypes(z, shifted);
    for (int k = 0; k < 3; ++k) REQUIRE(b.probs(0, k) == Approx(a.probs(0, k)).margin(1e-12));
}

TEST_CASE("group assignment sums the partition blocks", "[prototypes]") {
    AssignmentMatrix p;
    p.level = AssignLevel::prototype;
    p.probs = Matrix(1, 3);
    p.probs(0, 0) = 0.5;
    p.probs(0, 1) = 0.3;
    p.probs(0, 2) = 0.2;

    const AssignmentMatrix q = assign_groups(p, partition_of({0, 0, 1}));
    REQUIRE(q.probs(0, 0) == Approx(0.8).margin(1e-12));
    REQUIRE(q.probs(0, 1) == Approx(0.2).margin(1e-12));

    const AssignmentMatrix identity = assign_groups(p, partition_of({0, 1, 2}));
    for (int k = 0; k < 3; ++k)
        REQUIRE(identity.probs(0, k) == Approx(p.probs(0, k)).margin(1e-15));

    const AssignmentMatrix one = assign_groups(p, partition_of({0, 0, 0}));
    REQUIRE(one.cols() == 1);
    REQUIRE(one.probs(0, 0) == Approx(1.0).margin(1e-12));
}

TEST_CASE("group rows still sum to one", "[prototypes]") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 3 + static_cast<int>(rng.below(10));
        PrototypeBank bank = init_prototypes(K, 4, 0.2, trial);
        Matrix z(2, 4);
        for (int i = 0; i < 2; ++i) {
            const auto v = rng.unit_sphere(4);
            for (int j = 0; j < 4; ++j) z(i, j) = v[j];
        }
        std::vector<int> ids(K);
        const int groups = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(K)));
        for (int k = 0; k < K; ++k) ids[k] = k < groups ? k : static_cast<int>(rng.below(groups));
        const AssignmentMatrix q = assign_groups(assign_prototypes(z, bank), partition_of(ids));
        for (int i = 0; i < q.rows(); ++i) {
            double sum = 0.0;
            for (int g = 0; g < q.cols(); ++g) sum += q.probs(i, g);
            REQUIRE(sum == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("prior is uniform over groups and within groups", "[prototypes]") {
    const auto singles = prototype_prior(GroupPartition::singletons(4));
    for (double x : singles) REQUIRE(x == Approx(0.25).margin(1e-15));

    // groups {0,1}, {2}, {3}
    const auto prior = prototype_prior(partition_of({0, 0, 1, 2}));
    REQUIRE(prior[0] == Approx(1.0 / 6.0).margin(1e-15));
    REQUIRE(prior[1] == Approx(1.0 / 6.0).margin(1e-15));
    REQUIRE(prior[2] == Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(prior[3] == Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("prior sums to one for random partitions", "[prototypes]") {
    Rng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const int K = 1 + static_cast<int>(rng.below(20));
        std::vector<int> ids(K);
        const int groups = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(K)));
        for (int k = 0; k < K; ++k) ids[k] = k < groups ? k : static_cast<int>(rng.below(groups));
        const auto prior = prototype_prior(partition_of(ids));
        double sum = 0.0;
        for (double x : prior) sum += x;
        REQUIRE(sum == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("projection renormalizes rows and flags degenerate ones", "[prototypes]") {
    PrototypeBank bank;
    bank.vectors = Matrix(2, 3);
    bank.vectors(0, 0) = 2.0;
    bank.vectors(1, 1) = 1.0;
    project_prototypes(bank);
    REQUIRE(bank.vectors(0, 0) == Approx(1.0).margin(1e-12));
    REQUIRE(bank.vectors(1, 1) == Approx(1.0).margin(1e-12));

    // already unit: unchanged within 1e-12
    Matrix before = bank.vectors;
    project_prototypes(bank);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 3; ++j)
            REQUIRE(bank.vectors(k, j) == Approx(before(k, j)).margin(1e-12));

    bank.vectors(1, 1) = 0.0;
    try {
        project_prototypes(bank);
        FAIL("expected a degenerate row error");
    } catch (const DegenerateVectorError& err) {
        REQUIRE(err.index == 1);
    }
}

TEST_CASE("group assignment rejects bad partitions", "[prototypes]") {
    AssignmentMatrix p;
    p.level = AssignLevel::prototype;
    p.probs = Matrix(1, 3, 1.0 / 3.0);
    GroupPartition holey;
    holey.group_of = {0, 0, 2};  // id 1 unused
    holey.group_count = 3;
    REQUIRE_THROWS_AS(assign_groups(p, holey), ContractViolation);
}
