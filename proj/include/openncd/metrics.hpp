// Evaluation protocol: known-class accuracy against the training-time
// class-to-group matching, novel-class clustering accuracy over the
// unmatched groups, overall clustering accuracy via optimal assignment, and
// normalized mutual information.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "openncd/assignment.hpp"
#include "openncd/errors.hpp"
#include "openncd/grouping.hpp"
#include "openncd/matrix.hpp"

namespace openncd {

namespace detail {

// Relabels arbitrary ids to 0..n-1 (ascending id order).
inline std::vector<int> dense_relabel(const std::vector<int>& ids, int& out_count) {
    std::vector<int> uniq(ids);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    out_count = static_cast<int>(uniq.size());
    std::vector<int> dense(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
        dense[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), ids[i]) - uniq.begin());
    return dense;
}

inline Matrix contingency(const std::vector<int>& a, int na, const std::vector<int>& b, int nb) {
    Matrix t(na, nb);
    for (size_t i = 0; i < a.size(); ++i) t(a[i], b[i]) += 1.0;
    return t;
}

}  // namespace detail

// Fraction of instances explained by the best injective map between
// predicted clusters and true classes (optimal assignment on the
// contingency table).
inline double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw ContractViolation("clustering_accuracy: nonempty equal-length inputs required");
    int np = 0, nt = 0;
    const auto dp = detail::dense_relabel(pred, np);
    const auto dt = detail::dense_relabel(truth, nt);
    Matrix counts = detail::contingency(dp, np, dt, nt);
    // The solver wants rows <= cols; the matching total is symmetric.
    long matched = 0;
    if (np <= nt) {
        const auto col_of = max_benefit_assignment(counts);
        for (int i = 0; i < np; ++i) matched += static_cast<long>(counts(i, col_of[i]));
    } else {
        Matrix t(nt, np);
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < nt; ++j) t(j, i) = counts(i, j);
        const auto col_of = max_benefit_assignment(t);
        for (int j = 0; j < nt; ++j) matched += static_cast<long>(t(j, col_of[j]));
    }
    return static_cast<double>(matched) / static_cast<double>(pred.size());
}

// Mutual information normalized by the arithmetic mean of the two
// entropies; 1 when both partitions are a single cluster.
inline double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw ContractViolation("nmi: nonempty equal-length inputs required");
    int np = 0, nt = 0;
    const auto dp = detail::dense_relabel(pred, np);
    const auto dt = detail::dense_relabel(truth, nt);
    const Matrix counts = detail::contingency(dp, np, dt, nt);
    const double n = static_cast<double>(pred.size());

    std::vector<double> rp(np, 0.0), rt(nt, 0.0);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j) {
            rp[i] += counts(i, j);
            rt[j] += counts(i, j);
        }
    double hp = 0.0, ht = 0.0, mi = 0.0;
    for (int i = 0; i < np; ++i)
        if (rp[i] > 0) hp -= rp[i] / n * std::log(rp[i] / n);
    for (int j = 0; j < nt; ++j)
        if (rt[j] > 0) ht -= rt[j] / n * std::log(rt[j] / n);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j)
            if (counts(i, j) > 0)
                mi += counts(i, j) / n * std::log(counts(i, j) * n / (rp[i] * rt[j]));
    if (hp + ht == 0.0) return 1.0;  // both single-cluster
    return std::clamp(2.0 * mi / (hp + ht), 0.0, 1.0);
}

struct EvalReport {
    double known_acc = 1.0;  // vacuously 1 when no known-class instances exist
    double novel_acc = 1.0;  // vacuously 1 when no novel-class instances exist
    double all_acc = 0.0;
    double nmi = 0.0;
    int estimated_class_count = 0;
    // (class id, predicted group) -> count over the evaluated population.
    std::map<std::pair<int, int>, long> confusion;
};

// Scores a test split. predicted_group[i] is the argmax group of instance i;
// class_of[i] the ground truth; known_class[i] tags known-class membership.
// Known instances score against the training-time matching; novel instances
// are clustered over the groups left unmatched (a novel instance predicted
// into a matched group counts as an error).
inline EvalReport open_world_report(const std::vector<int>& predicted_group,
                                    const std::vector<int>& class_of,
                                    const std::vector<uint8_t>& known_class,
                                    const ClassGroupMatching& matching,
                                    const GroupPartition& partition) {
    const size_t n = predicted_group.size();
    if (n == 0 || class_of.size() != n || known_class.size() != n)
        throw ContractViolation("open_world_report: nonempty equal-length inputs required");
    for (size_t i = 0; i < n; ++i)
        if (known_class[i] && !matching.group_of_class.count(class_of[i]))
            throw ContractViolation("open_world_report: known class missing from the matching");

    EvalReport report;
    report.estimated_class_count = estimate_class_count(partition);
    for (size_t i = 0; i < n; ++i) report.confusion[{class_of[i], predicted_group[i]}] += 1;

    long known_total = 0, known_hit = 0;
    std::vector<int> novel_pred, novel_truth;
    long novel_total = 0, novel_in_free_groups = 0;
    for (size_t i = 0; i < n; ++i) {
        if (known_class[i]) {
            ++known_total;
            if (matching.group_of_class.at(class_of[i]) == predicted_group[i]) ++known_hit;
        } else {
            ++novel_total;
            if (!matching.contains_group(predicted_group[i])) {
                ++novel_in_free_groups;
                novel_pred.push_back(predicted_group[i]);
                novel_truth.push_back(class_of[i]);
            }
        }
    }
    if (known_total > 0) report.known_acc = static_cast<double>(known_hit) / known_total;
    if (novel_total > 0) {
        double matched = 0.0;
        if (!novel_pred.empty()) {
            // Optimal matching restricted to instances in unmatched groups;
            // the rest of the novel population stays in the denominator.
            matched = clustering_accuracy(novel_pred, novel_truth) *
                      static_cast<double>(novel_in_free_groups);
        }
        report.novel_acc = matched / static_cast<double>(novel_total);
    }
    report.all_acc = clustering_accuracy(predicted_group, class_of);
    report.nmi = nmi(predicted_group, class_of);
    return report;
}

}  // namespace openncd
