// Progressive prototype grouping: representing-instance sets from top-k
// assignments, Jaccard affinity between prototypes, threshold-linked
// connected components, the class-to-group matching, and the automatic
// threshold choice (label-driven when labels exist, largest affinity gap
// otherwise).
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "openncd/assignment.hpp"
#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"
#include "openncd/prototypes.hpp"

namespace openncd {

// instances_of[k] lists (ascending) the instances whose top-k assignment
// probabilities include prototype k. Ties break toward the lower prototype
// index, so membership depends only on per-row ranks.
struct RepresentingSets {
    std::vector<std::vector<int>> instances_of;
    int instance_count = 0;
    int top_k = 0;

    int prototype_count() const { return static_cast<int>(instances_of.size()); }
};

inline RepresentingSets representing_sets(const AssignmentMatrix& p_all, int top_k) {
    if (p_all.level != AssignLevel::prototype)
        throw ContractViolation("representing_sets: prototype-level input required");
    const int K = p_all.cols();
    if (top_k < 1 || top_k > K)
        throw ContractViolation("representing_sets: top_k must be in [1, K]");
    RepresentingSets sets;
    sets.instances_of.resize(K);
    sets.instance_count = p_all.rows();
    sets.top_k = top_k;
    std::vector<int> order(K);
    for (int i = 0; i < p_all.rows(); ++i) {
        std::iota(order.begin(), order.end(), 0);
        const auto row = p_all.probs.row(i);
        std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                          [&](int a, int b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
        for (int r = 0; r < top_k; ++r) sets.instances_of[order[r]].push_back(i);
    }
    return sets;
}

// Pairwise intersection-over-union of the representing sets. Two empty sets
// score 0 (no co-representation evidence); the diagonal is 1 for any
// nonempty set.
inline Matrix jaccard_affinity(const RepresentingSets& sets) {
    const int K = sets.prototype_count();
    Matrix s(K, K);
    for (int i = 0; i < K; ++i) {
        const auto& a = sets.instances_of[i];
        s(i, i) = a.empty() ? 0.0 : 1.0;
        for (int j = i + 1; j < K; ++j) {
            const auto& b = sets.instances_of[j];
            size_t inter = 0, ia = 0, ib = 0;
            while (ia < a.size() && ib < b.size()) {
                if (a[ia] == b[ib]) {
                    ++inter;
                    ++ia;
                    ++ib;
                } else if (a[ia] < b[ib]) {
                    ++ia;
                } else {
                    ++ib;
                }
            }
            const size_t uni = a.size() + b.size() - inter;
            const double val = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            s(i, j) = val;
            s(j, i) = val;
        }
    }
    return s;
}

// Connected components of the graph with an edge wherever affinity exceeds
// the threshold (strictly). Group ids are ordered by each group's smallest
// member index, so raising the threshold only refines the partition.
inline GroupPartition link_groups(const Matrix& affinity, double threshold) {
    const int K = affinity.rows();
    if (affinity.cols() != K) throw ContractViolation("link_groups: square affinity required");
    std::vector<int> root(K);
    std::iota(root.begin(), root.end(), 0);
    auto find = [&](int x) {
        while (root[x] != x) {
            root[x] = root[root[x]];
            x = root[x];
        }
        return x;
    };
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j)
            if (affinity(i, j) > threshold) {
                const int ri = find(i), rj = find(j);
                if (ri != rj) root[std::max(ri, rj)] = std::min(ri, rj);
            }
    GroupPartition part;
    part.group_of.assign(K, -1);
    int next_id = 0;
    for (int k = 0; k < K; ++k) {
        const int r = find(k);
        if (r == k) part.group_of[k] = next_id++;
    }
    for (int k = 0; k < K; ++k) part.group_of[k] = part.group_of[find(k)];
    part.group_count = next_id;
    return part;
}

// Injective map from known class to group, maximizing the number of labeled
// instances whose argmax group equals their class's group. Solved exactly.
struct ClassGroupMatching {
    std::map<int, int> group_of_class;
    std::map<int, double> accuracy_of_class;  // per-class matched fraction
    long matched_count = 0;
    long labeled_count = 0;

    double accuracy() const {
        return labeled_count == 0 ? 0.0 : static_cast<double>(matched_count) / labeled_count;
    }
    bool contains_group(int g) const {
        for (const auto& [cls, grp] : group_of_class)
            if (grp == g) return true;
        return false;
    }
};

inline ClassGroupMatching match_classes_to_groups(const AssignmentMatrix& q_labeled,
                                                  const std::vector<int>& class_ids) {
    if (q_labeled.level != AssignLevel::group)
        throw ContractViolation("match_classes_to_groups: group-level input required");
    if (static_cast<size_t>(q_labeled.rows()) != class_ids.size())
        throw ContractViolation("match_classes_to_groups: one class id per row required");
    if (q_labeled.rows() < 1)
        throw ContractViolation("match_classes_to_groups: at least one labeled instance required");

    std::vector<int> classes(class_ids);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const int C = static_cast<int>(classes.size());
    const int G = q_labeled.cols();
    if (G < C)
        throw InfeasibleMatchingError("match_classes_to_groups: " + std::to_string(G) +
                                      " groups < " + std::to_string(C) + " classes");

    Matrix counts(C, G);
    std::vector<long> class_total(C, 0);
    for (int i = 0; i < q_labeled.rows(); ++i) {
        const auto row = q_labeled.probs.row(i);
        int best = 0;
        for (int g = 1; g < G; ++g)
            if (row[g] > row[best]) best = g;
        const int c = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), class_ids[i]) -
                                       classes.begin());
        counts(c, best) += 1.0;
        class_total[c] += 1;
    }

    const auto col_of = max_benefit_assignment(counts);
    ClassGroupMatching match;
    match.labeled_count = q_labeled.rows();
    for (int c = 0; c < C; ++c) {
        match.group_of_class[classes[c]] = col_of[c];
        const long hit = static_cast<long>(counts(c, col_of[c]));
        match.matched_count += hit;
        match.accuracy_of_class[classes[c]] =
            class_total[c] == 0 ? 0.0 : static_cast<double>(hit) / class_total[c];
    }
    return match;
}

struct ThresholdChoice {
    double threshold = 0.0;
    GroupPartition partition;
    double labeled_accuracy = 0.0;
    bool feasible = true;  // false when every candidate had fewer groups than classes
};

// Instances per prototype-level argmax, the cheap witness for whether a
// group would actually claim anything: a group none of whose prototypes is
// any instance's top choice is a phantom cluster.
inline std::vector<long> argmax_instance_counts(const AssignmentMatrix& p_all) {
    if (p_all.level != AssignLevel::prototype)
        throw ContractViolation("argmax_instance_counts: prototype-level input required");
    std::vector<long> counts(p_all.cols(), 0);
    for (int i = 0; i < p_all.rows(); ++i) {
        const auto row = p_all.probs.row(i);
        int best = 0;
        for (int k = 1; k < p_all.cols(); ++k)
            if (row[k] > row[best]) best = k;
        counts[best] += 1;
    }
    return counts;
}

namespace detail {

inline int silent_group_count(const GroupPartition& part, const std::vector<long>& argmax_counts) {
    std::vector<char> claimed(part.group_count, 0);
    for (int k = 0; k < part.size(); ++k)
        if (argmax_counts[k] > 0) claimed[part.group_of[k]] = 1;
    int silent = 0;
    for (char c : claimed) silent += c == 0;
    return silent;
}

struct SweepEntry {
    double first_delta = 0.0;
    GroupPartition partition;
    double accuracy = 0.0;
    bool feasible = false;
    int silent = 0;
    double persistence = 0.0;
};

// Distinct partitions along the sorted candidate axis, each keyed by the
// first threshold that produces it and by how long it persists before the
// next refinement.
inline std::vector<SweepEntry> sweep_partitions(const Matrix& affinity,
                                                const std::vector<double>& candidates,
                                                const std::vector<long>& argmax_counts) {
    std::vector<double> sorted(candidates);
    std::sort(sorted.begin(), sorted.end());
    std::vector<SweepEntry> entries;
    for (const double delta : sorted) {
        GroupPartition part = link_groups(affinity, delta);
        if (!entries.empty() && part.group_of == entries.back().partition.group_of) continue;
        SweepEntry e;
        e.first_delta = delta;
        e.silent = silent_group_count(part, argmax_counts);
        e.partition = std::move(part);
        entries.push_back(std::move(e));
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        const double upper = i + 1 < entries.size() ? entries[i + 1].first_delta : 1.0;
        entries[i].persistence = upper - entries[i].first_delta;
    }
    return entries;
}

// Shared tie-break order below the primary key: the partition holding the
// widest threshold interval first (spurious granularities live on thin
// slivers of the threshold axis), then fewest phantom groups, then fewer
// groups, then the larger threshold (later entries win equal comparisons).
// Phantom-freeness must not outrank persistence: merging two live groups
// always removes phantoms, so a leading phantom key would reward fusing
// real classes through weak bridges.
inline bool tie_break_better(const SweepEntry& e, const SweepEntry& best) {
    if (e.persistence != best.persistence) return e.persistence > best.persistence;
    if (e.silent != best.silent) return e.silent < best.silent;
    return e.partition.group_count <= best.partition.group_count;
}

}  // namespace detail

// Candidate thresholds: the sorted distinct off-diagonal affinities, the
// midpoints between consecutive ones, plus 0 and 1.
inline std::vector<double> threshold_candidates(const Matrix& affinity) {
    std::vector<double> values;
    for (int i = 0; i < affinity.rows(); ++i)
        for (int j = i + 1; j < affinity.cols(); ++j) values.push_back(affinity(i, j));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> cands;
    cands.push_back(0.0);
    for (size_t i = 0; i < values.size(); ++i) {
        cands.push_back(values[i]);
        if (i + 1 < values.size()) cands.push_back(0.5 * (values[i] + values[i + 1]));
    }
    cands.push_back(1.0);
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    return cands;
}

// Label-driven threshold selection. Among candidate thresholds, build the
// partition, match classes to groups, and score accuracy on the labeled
// instances; distinct partitions are keyed by the smallest candidate that
// produces them. Ties in accuracy break toward fewer phantom groups, then
// the partition persisting over the widest threshold interval (spurious
// granularities live on thin slivers of the threshold axis, the class-level
// one on a wide band), then fewer groups, then the larger threshold. If no
// candidate yields at least as many groups as classes, the candidate with
// the most groups is returned with feasible=false.
inline ThresholdChoice tune_threshold(const Matrix& affinity, const AssignmentMatrix& p_labeled,
                                      const std::vector<int>& class_ids,
                                      const std::vector<double>& candidates,
                                      const std::vector<long>& argmax_counts) {
    if (p_labeled.rows() < 1)
        throw ContractViolation("tune_threshold: at least one labeled instance required");
    if (p_labeled.level != AssignLevel::prototype)
        throw ContractViolation("tune_threshold: prototype-level assignments required");

    std::vector<int> classes(class_ids);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const int num_classes = static_cast<int>(classes.size());

    auto entries = detail::sweep_partitions(affinity, candidates, argmax_counts);
    for (auto& e : entries) {
        if (e.partition.group_count < num_classes) continue;
        const AssignmentMatrix q = assign_groups(p_labeled, e.partition);
        e.accuracy = match_classes_to_groups(q, class_ids).accuracy();
        e.feasible = true;
    }

    const detail::SweepEntry* best = nullptr;
    for (const auto& e : entries) {
        if (!e.feasible) continue;
        if (!best || e.accuracy > best->accuracy ||
            (e.accuracy == best->accuracy && detail::tie_break_better(e, *best)))
            best = &e;
    }
    if (!best) {
        // infeasible fallback: the candidate with the most groups
        const detail::SweepEntry* widest = nullptr;
        for (const auto& e : entries)
            if (!widest || e.partition.group_count > widest->partition.group_count) widest = &e;
        return {widest->first_delta, widest->partition, 0.0, false};
    }
    return {best->first_delta, best->partition, best->accuracy, true};
}

// Unsupervised threshold selection for label-free runs: the same sweep with
// no accuracy key, so phantom-free wide-band partitions win.
inline ThresholdChoice choose_threshold_unsupervised(const Matrix& affinity,
                                                     const std::vector<double>& candidates,
                                                     const std::vector<long>& argmax_counts) {
    const auto entries = detail::sweep_partitions(affinity, candidates, argmax_counts);
    const detail::SweepEntry* best = nullptr;
    for (const auto& e : entries)
        if (!best || detail::tie_break_better(e, *best)) best = &e;
    return {best->first_delta, best->partition, 0.0, true};
}

// The number of groups is the estimated class count.
inline int estimate_class_count(const GroupPartition& partition) {
    partition.validate();
    return partition.group_count;
}

}  // namespace openncd
