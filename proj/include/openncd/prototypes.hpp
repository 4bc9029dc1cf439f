// Trainable unit-norm prototypes, the current partition of prototypes into
// groups, and the temperature-scaled assignment probabilities at the
// prototype and group levels, plus the balance prior over prototypes.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"
#include "openncd/numerics.hpp"
#include "openncd/rng.hpp"

namespace openncd {

struct PrototypeBank {
    Matrix vectors;            // K x d, rows kept unit-norm by projection
    double temperature = 0.1;  // softmax temperature

    int count() const { return vectors.rows(); }
    int dim() const { return vectors.cols(); }
};

// K independent draws uniform on the unit sphere.
inline PrototypeBank init_prototypes(int count, int dim, double temperature, uint64_t seed) {
    if (count < 1 || dim < 1) throw ContractViolation("init_prototypes: count and dim must be positive");
    if (!(temperature > 0.0)) throw ContractViolation("init_prototypes: temperature must be positive");
    PrototypeBank bank;
    bank.temperature = temperature;
    bank.vectors = Matrix(count, dim);
    Rng rng(seed);
    for (int k = 0; k < count; ++k) {
        const auto v = rng.unit_sphere(dim);
        for (int j = 0; j < dim; ++j) bank.vectors(k, j) = v[j];
    }
    return bank;
}

struct GroupPartition {
    std::vector<int> group_of;  // prototype index -> group id
    int group_count = 0;

    static GroupPartition singletons(int prototype_count) {
        GroupPartition p;
        p.group_of.resize(prototype_count);
        std::iota(p.group_of.begin(), p.group_of.end(), 0);
        p.group_count = prototype_count;
        return p;
    }

    int size() const { return static_cast<int>(group_of.size()); }

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> m(group_count);
        for (int k = 0; k < size(); ++k) m[group_of[k]].push_back(k);
        return m;
    }

    // Every group id in 0..group_count-1 must be used by at least one
    // prototype; groups are disjoint by construction of the map.
    void validate() const {
        if (group_count < 1) throw ContractViolation("GroupPartition: group_count must be positive");
        std::vector<char> used(group_count, 0);
        for (int g : group_of) {
            if (g < 0 || g >= group_count) throw ContractViolation("GroupPartition: group id out of range");
            used[g] = 1;
        }
        for (char u : used)
            if (!u) throw ContractViolation("GroupPartition: unused group id (not a partition)");
    }
};

enum class AssignLevel { prototype, group };

// Per-instance assignment probabilities: rows are distributions over the K
// prototypes or over the N_g groups depending on the level tag.
struct AssignmentMatrix {
    Matrix probs;
    AssignLevel level = AssignLevel::prototype;

    int rows() const { return probs.rows(); }
    int cols() const { return probs.cols(); }
};

// Softmax over z . c_k / tau per row. Similarities are raw dot products:
// callers maintain the unit-norm invariant (projection), so the gradient of
// any loss through this map stays consistent with finite differences.
inline AssignmentMatrix assign_prototypes(const Matrix& embeddings, const PrototypeBank& bank) {
    if (embeddings.cols() != bank.dim())
        throw ContractViolation("assign_prototypes: embedding/prototype dimension mismatch");
    const int B = embeddings.rows(), K = bank.count();
    AssignmentMatrix out;
    out.level = AssignLevel::prototype;
    out.probs = Matrix(B, K);
    std::vector<double> logits(K);
    for (int i = 0; i < B; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            logits[k] = dot(embeddings.row(i), bank.vectors.row(k)) / bank.temperature;
            max_logit = std::max(max_logit, logits[k]);
        }
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
            out.probs(i, k) = std::exp(logits[k] - max_logit);
            sum += out.probs(i, k);
        }
        for (int k = 0; k < K; ++k) out.probs(i, k) /= sum;
    }
    return out;
}

// Group-level assignment: q_g sums p over the group's prototypes. Rows keep
// summing to 1 because the groups partition the prototype set.
inline AssignmentMatrix assign_groups(const AssignmentMatrix& p, const GroupPartition& partition) {
    if (p.level != AssignLevel::prototype)
        throw ContractViolation("assign_groups: input must be prototype-level");
    if (p.cols() != partition.size())
        throw ContractViolation("assign_groups: partition length does not match prototype count");
    partition.validate();
    AssignmentMatrix out;
    out.level = AssignLevel::group;
    out.probs = Matrix(p.rows(), partition.group_count);
    for (int i = 0; i < p.rows(); ++i)
        for (int k = 0; k < p.cols(); ++k) out.probs(i, partition.group_of[k]) += p.probs(i, k);
    return out;
}

// Balance prior: uniform across groups and uniform within each group,
// p_prior[k] = 1 / (group_count * |group of k|). Sums to 1 for any partition.
inline std::vector<double> prototype_prior(const GroupPartition& partition) {
    partition.validate();
    std::vector<int> group_size(partition.group_count, 0);
    for (int g : partition.group_of) group_size[g] += 1;
    std::vector<double> prior(partition.size());
    for (int k = 0; k < partition.size(); ++k)
        prior[k] = 1.0 / (static_cast<double>(partition.group_count) * group_size[partition.group_of[k]]);
    return prior;
}

// Renormalize every prototype row to unit length (projection step after each
// optimizer update).
inline void project_prototypes(PrototypeBank& bank) {
    for (int k = 0; k < bank.count(); ++k) l2_normalize_row(bank.vectors.row(k), k);
}

}  // namespace openncd
