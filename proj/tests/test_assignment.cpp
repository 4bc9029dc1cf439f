#include <algorithm>
#include <functional>
#include <vector>

#include <catch_amalgamated.hpp>

#include "openncd/assignment.hpp"
#include "openncd/rng.hpp"

using namespace openncd;

namespace {

// Exhaustive maximum over injective row -> column maps.
double brute_force_best(const Matrix& benefit) {
    const int n = benefit.rows(), m = benefit.cols();
    std::vector<int> cols(m);
    for (int j = 0; j < m; ++j) cols[j] = j;
    double best = -1e300;
    std::vector<char> used(m, 0);
    std::vector<double> stack;
    const std::function<void(int, double)> rec = [&](int row, double acc) {
        if (row == n) {
            best = std::max(best, acc);
            return;
        }
        for (int j = 0; j < m; ++j) {
            if (used[j]) continue;
            used[j] = 1;
            rec(row + 1, acc + benefit(row, j));
            used[j] = 0;
        }
    };
    rec(0, 0.0);
    return best;
}

double total_of(const Matrix& benefit, const std::vector<int>& col_of) {
    double t = 0.0;
    for (int i = 0; i < benefit.rows(); ++i) t += benefit(i, col_of[i]);
    return t;
}

}  // namespace

TEST_CASE("two-by-two matching picks the cross assignment", "[assignment]") {
    Matrix benefit(2, 2);
    benefit(0, 0) = 1;
    benefit(0, 1) = 2;
    benefit(1, 0) = 2;
    benefit(1, 1) = 1;
    const auto col_of = max_benefit_assignment(benefit);
    REQUIRE(col_of[0] == 1);
    REQUIRE(col_of[1] == 0);
    REQUIRE(total_of(benefit, col_of) == 4.0);
}

TEST_CASE("diagonal dominance yields the identity matching", "[assignment]") {
    Matrix benefit(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) benefit(i, j) = i == j ? 10.0 : 1.0;
    const auto col_of = max_benefit_assignment(benefit);
    for (int i = 0; i < 4; ++i) REQUIRE(col_of[i] == i);
}

TEST_CASE("solver equals brute force on random rectangular instances", "[assignment]") {
    Rng rng(101);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(5));
        const int m = n + static_cast<int>(rng.below(4));
        Matrix benefit(n, m);
        for (double& x : benefit.data())
            x = static_cast<double>(rng.below(50));  // integer-valued, ties common
        const auto col_of = max_benefit_assignment(benefit);
        std::vector<char> seen(m, 0);
        for (int i = 0; i < n; ++i) {
            REQUIRE(col_of[i] >= 0);
            REQUIRE(col_of[i] < m);
            REQUIRE(!seen[col_of[i]]);
            seen[col_of[i]] = 1;
        }
        REQUIRE(total_of(benefit, col_of) == brute_force_best(benefit));
    }
}

TEST_CASE("solver handles real-valued costs", "[assignment]") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(4));
        Matrix benefit(n, n + 2);
        for (double& x : benefit.data()) x = rng.uniform(-3.0, 3.0);
        const auto col_of = max_benefit_assignment(benefit);
        REQUIRE(total_of(benefit, col_of) >= brute_force_best(benefit) - 1e-9);
    }
}

TEST_CASE("more rows than columns is a contract violation", "[assignment]") {
    REQUIRE_THROWS_AS(min_cost_assignment(Matrix(3, 2)), ContractViolation);
}
