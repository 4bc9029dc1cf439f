// The four objective terms and their analytic gradients with respect to the
// embeddings and the prototypes:
//   - prototype-level pair loss: -log of the cosine similarity between the
//     two assignment distributions of a positive pair
//   - group-level pair loss: symmetrized cross-entropy between the two
//     group assignment distributions
//   - balance regularizer: KL(mean assignment || prior)
//   - supervised term: cross-entropy of labeled instances against their
//     matched group
// Total = proto + group + reg_weight * reg + ce_weight * ce. Probabilities
// entering a log are clamped at kLogClamp; gradients through a clamped
// entry are zero.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"
#include "openncd/prototypes.hpp"

namespace openncd {

constexpr double kLogClamp = 1e-8;

struct LossBreakdown {
    double proto = 0.0;
    double group = 0.0;
    double reg = 0.0;
    double ce = 0.0;
    double reg_weight = 1.0;
    double ce_weight = 1.0;
    double total = 0.0;

    void finalize() { total = proto + group + reg_weight * reg + ce_weight * ce; }

    bool finite() const {
        return std::isfinite(proto) && std::isfinite(group) && std::isfinite(reg) &&
               std::isfinite(ce) && std::isfinite(total);
    }
};

enum class PairKind { labeled_same_class, nearest_neighbor };

// Anchor i pairs with positive_of[i]; the anchor side is the augmented view,
// the positive side the plain view. anchor != positive always.
struct PositivePairing {
    std::vector<int> positive_of;
    std::vector<PairKind> kind;

    int size() const { return static_cast<int>(positive_of.size()); }

    void validate(int batch_size) const {
        if (size() != batch_size || static_cast<int>(kind.size()) != batch_size)
            throw ContractViolation("PositivePairing: one pair per batch instance required");
        for (int i = 0; i < size(); ++i)
            if (positive_of[i] < 0 || positive_of[i] >= batch_size || positive_of[i] == i)
                throw ContractViolation("PositivePairing: positive index out of range or self-pair");
    }
};

namespace detail {

inline double clamped_log(double x) { return std::log(x < kLogClamp ? kLogClamp : x); }

inline void check_same_shape(const AssignmentMatrix& a, const AssignmentMatrix& b,
                             AssignLevel level, const char* who) {
    if (a.level != level || b.level != level || !a.probs.same_shape(b.probs))
        throw ContractViolation(std::string(who) + ": shape or level mismatch");
}

// -log of the clamped cosine similarity between two probability rows.
inline double pair_proto_term(std::span<const double> p, std::span<const double> q) {
    const double u = dot(p, q);
    const double r = u / (norm(p) * norm(q));
    const double clamped = r < kLogClamp ? kLogClamp : (r > 1.0 ? 1.0 : r);
    return -std::log(clamped);
}

// Symmetrized cross-entropy of two probability rows.
inline double pair_group_term(std::span<const double> q, std::span<const double> qp) {
    double s = 0.0;
    for (size_t g = 0; g < q.size(); ++g)
        s += qp[g] * clamped_log(q[g]) + q[g] * clamped_log(qp[g]);
    return -s;
}

}  // namespace detail

// Mean over pairs of the prototype-level term.
inline double proto_loss(const AssignmentMatrix& p_anchor, const AssignmentMatrix& p_positive) {
    detail::check_same_shape(p_anchor, p_positive, AssignLevel::prototype, "proto_loss");
    double total = 0.0;
    for (int i = 0; i < p_anchor.rows(); ++i)
        total += detail::pair_proto_term(p_anchor.probs.row(i), p_positive.probs.row(i));
    return total / p_anchor.rows();
}

// Mean over pairs of the group-level term.
inline double group_loss(const AssignmentMatrix& q_anchor, const AssignmentMatrix& q_positive) {
    detail::check_same_shape(q_anchor, q_positive, AssignLevel::group, "group_loss");
    double total = 0.0;
    for (int i = 0; i < q_anchor.rows(); ++i)
        total += detail::pair_group_term(q_anchor.probs.row(i), q_positive.probs.row(i));
    return total / q_anchor.rows();
}

// KL divergence from the prior to the column mean of the batch assignments.
inline double reg_loss(const AssignmentMatrix& p_all, const std::vector<double>& prior) {
    if (p_all.level != AssignLevel::prototype)
        throw ContractViolation("reg_loss: prototype-level input required");
    if (static_cast<size_t>(p_all.cols()) != prior.size())
        throw ContractViolation("reg_loss: prior length mismatch");
    if (p_all.rows() < 1) throw ContractViolation("reg_loss: empty batch");
    double kl = 0.0;
    for (int k = 0; k < p_all.cols(); ++k) {
        double mean = 0.0;
        for (int i = 0; i < p_all.rows(); ++i) mean += p_all.probs(i, k);
        mean /= p_all.rows();
        if (mean > 0.0) kl += mean * std::log(mean / prior[k]);  // 0 log 0 -> 0
    }
    return kl;
}

// Mean of -log q[ground-truth group] over the labeled rows.
inline double ce_loss(const AssignmentMatrix& q_labeled, const std::vector<int>& group_labels) {
    if (q_labeled.level != AssignLevel::group)
        throw ContractViolation("ce_loss: group-level input required");
    if (static_cast<size_t>(q_labeled.rows()) != group_labels.size())
        throw ContractViolation("ce_loss: one label per row required");
    if (q_labeled.rows() < 1) throw ContractViolation("ce_loss: empty input");
    double total = 0.0;
    for (int i = 0; i < q_labeled.rows(); ++i) {
        const int y = group_labels[i];
        if (y < 0 || y >= q_labeled.cols()) throw ContractViolation("ce_loss: group label out of range");
        total += -detail::clamped_log(q_labeled.probs(i, y));
    }
    return total / q_labeled.rows();
}

struct LossGrads {
    LossBreakdown breakdown;
    Matrix d_anchor;      // B x d, gradient w.r.t. the anchor-view embeddings
    Matrix d_plain;       // B x d, gradient w.r.t. the plain-view embeddings
    Matrix d_prototypes;  // K x d
};

namespace detail {

// d/dp of pair_proto_term at p (the other row held as q).
inline void add_pair_proto_grad(std::span<const double> p, std::span<const double> q, double scale,
                                std::span<double> g) {
    const double u = dot(p, q);
    const double a = norm(p), b = norm(q);
    const double r = u / (a * b);
    if (r <= kLogClamp || r >= 1.0) return;  // clamped region: zero gradient
    const double c = -scale / (r * a * b);
    const double ua2 = u / (a * a);
    for (size_t k = 0; k < p.size(); ++k) g[k] += c * (q[k] - ua2 * p[k]);
}

// d/dq and d/dq' of pair_group_term, accumulated at group level.
inline void add_pair_group_grad(std::span<const double> q, std::span<const double> qp, double scale,
                                std::span<double> gq, std::span<double> gqp) {
    for (size_t g = 0; g < q.size(); ++g) {
        const double inv_q = q[g] > kLogClamp ? 1.0 / q[g] : 0.0;
        const double inv_qp = qp[g] > kLogClamp ? 1.0 / qp[g] : 0.0;
        gq[g] += -scale * (qp[g] * inv_q + clamped_log(qp[g]));
        gqp[g] += -scale * (clamped_log(q[g]) + q[g] * inv_qp);
    }
}

}  // namespace detail

// Full objective and analytic gradients for one batch.
//
// anchor_z rows are the augmented-view embeddings (one per batch instance);
// plain_z rows are the un-augmented embeddings from which positives are
// gathered. group_label_of[i] is the matched group of a labeled anchor or -1.
// The regularizer and the supervised term read the anchor view; both sides
// of each pair receive gradient (no stop-gradient).
inline LossGrads total_loss_and_grads(const Matrix& anchor_z, const Matrix& plain_z,
                                      const PrototypeBank& bank, const GroupPartition& partition,
                                      const PositivePairing& pairing,
                                      const std::vector<int>& group_label_of, double reg_weight,
                                      double ce_weight) {
    const int B = anchor_z.rows(), K = bank.count(), d = bank.dim();
    if (!plain_z.same_shape(anchor_z))
        throw ContractViolation("total_loss_and_grads: view shape mismatch");
    if (static_cast<int>(group_label_of.size()) != B)
        throw ContractViolation("total_loss_and_grads: one group label per instance required");
    pairing.validate(B);
    partition.validate();
    if (partition.size() != K)
        throw ContractViolation("total_loss_and_grads: partition/prototype count mismatch");

    const AssignmentMatrix p_anchor = assign_prototypes(anchor_z, bank);
    const AssignmentMatrix p_plain = assign_prototypes(plain_z, bank);
    const AssignmentMatrix q_anchor = assign_groups(p_anchor, partition);
    const AssignmentMatrix q_plain = assign_groups(p_plain, partition);
    const std::vector<double> prior = prototype_prior(partition);
    const int Ng = partition.group_count;

    LossGrads out;
    out.breakdown.reg_weight = reg_weight;
    out.breakdown.ce_weight = ce_weight;

    // Gradients w.r.t. the prototype-level probability rows, accumulated
    // across every term before a single softmax backward per row.
    Matrix g_anchor(B, K), g_plain(B, K);
    Matrix gq_anchor(B, Ng), gq_plain(B, Ng);

    // Pair terms.
    double proto_total = 0.0, group_total = 0.0;
    const double pair_scale = 1.0 / B;
    for (int i = 0; i < B; ++i) {
        const int j = pairing.positive_of[i];
        proto_total += detail::pair_proto_term(p_anchor.probs.row(i), p_plain.probs.row(j));
        group_total += detail::pair_group_term(q_anchor.probs.row(i), q_plain.probs.row(j));
        detail::add_pair_proto_grad(p_anchor.probs.row(i), p_plain.probs.row(j), pair_scale,
                                    g_anchor.row(i));
        detail::add_pair_proto_grad(p_plain.probs.row(j), p_anchor.probs.row(i), pair_scale,
                                    g_plain.row(j));
        detail::add_pair_group_grad(q_anchor.probs.row(i), q_plain.probs.row(j), pair_scale,
                                    gq_anchor.row(i), gq_plain.row(j));
    }
    out.breakdown.proto = proto_total / B;
    out.breakdown.group = group_total / B;

    // Balance regularizer over the anchor view of the whole batch.
    out.breakdown.reg = reg_loss(p_anchor, prior);
    if (reg_weight != 0.0) {
        std::vector<double> col_mean(K, 0.0);
        for (int i = 0; i < B; ++i)
            for (int k = 0; k < K; ++k) col_mean[k] += p_anchor.probs(i, k);
        for (int k = 0; k < K; ++k) col_mean[k] /= B;
        std::vector<double> dmean(K);
        for (int k = 0; k < K; ++k)
            dmean[k] =
                col_mean[k] > 0.0 ? reg_weight / B * (std::log(col_mean[k] / prior[k]) + 1.0) : 0.0;
        for (int i = 0; i < B; ++i)
            for (int k = 0; k < K; ++k) g_anchor(i, k) += dmean[k];
    }

    // Supervised term over labeled anchors.
    int labeled = 0;
    for (int i = 0; i < B; ++i)
        if (group_label_of[i] >= 0) ++labeled;
    if (labeled > 0) {
        double ce_total = 0.0;
        for (int i = 0; i < B; ++i) {
            const int y = group_label_of[i];
            if (y < 0) continue;
            if (y >= Ng) throw ContractViolation("total_loss_and_grads: group label out of range");
            const double qy = q_anchor.probs(i, y);
            ce_total += -detail::clamped_log(qy);
            if (ce_weight != 0.0 && qy > kLogClamp)
                gq_anchor(i, y) += -ce_weight / (labeled * qy);
        }
        out.breakdown.ce = ce_total / labeled;
    }
    out.breakdown.finalize();

    // Expand group-level gradients to prototype level.
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < K; ++k) {
            const int g = partition.group_of[k];
            g_anchor(i, k) += gq_anchor(i, g);
            g_plain(i, k) += gq_plain(i, g);
        }

    // One softmax backward per row, then through the scaled dot products.
    out.d_anchor = Matrix(B, d);
    out.d_plain = Matrix(B, d);
    out.d_prototypes = Matrix(K, d);
    const double inv_tau = 1.0 / bank.temperature;
    std::vector<double> ds(K);
    auto backprop_row = [&](std::span<const double> p, std::span<const double> g,
                            std::span<const double> z, std::span<double> dz) {
        double gp = 0.0;
        for (int k = 0; k < K; ++k) gp += g[k] * p[k];
        for (int k = 0; k < K; ++k) ds[k] = p[k] * (g[k] - gp);
        for (int k = 0; k < K; ++k) {
            const double s = ds[k] * inv_tau;
            if (s == 0.0) continue;
            const auto c = bank.vectors.row(k);
            for (int j = 0; j < d; ++j) {
                dz[j] += s * c[j];
                out.d_prototypes(k, j) += s * z[j];
            }
        }
    };
    for (int i = 0; i < B; ++i) {
        backprop_row(p_anchor.probs.row(i), g_anchor.row(i), anchor_z.row(i), out.d_anchor.row(i));
        backprop_row(p_plain.probs.row(i), g_plain.row(i), plain_z.row(i), out.d_plain.row(i));
    }
    return out;
}

}  // namespace openncd
