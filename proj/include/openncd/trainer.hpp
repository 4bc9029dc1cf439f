// Training orchestration: per-batch positive pairing, loss and gradient
// computation, Adam updates with prototype projection, per-epoch prototype
// grouping with automatic threshold choice, class-to-group matching, and
// held-out evaluation. One seed makes the whole run bit-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "openncd/data.hpp"
#include "openncd/encoder.hpp"
#include "openncd/errors.hpp"
#include "openncd/grouping.hpp"
#include "openncd/losses.hpp"
#include "openncd/metrics.hpp"
#include "openncd/numerics.hpp"
#include "openncd/prototypes.hpp"
#include "openncd/rng.hpp"

namespace openncd {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 128;
    double learning_rate = 0.002;
    double temperature = 0.1;
    double reg_weight = 1.0;  // weight of the balance regularizer
    double ce_weight = 1.0;   // weight of the supervised term
    int top_k = 5;            // representing-set size per instance
    int num_prototypes = 50;
    int warmup_epochs = 0;  // epochs before the first regrouping
    double noise_std = 0.5;
    int threshold_grid = 0;  // 0: candidates from observed affinities; N>0: uniform grid
    uint64_t seed = 1;
    EncoderConfig encoder;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be positive");
        if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
        if (!(temperature > 0.0)) throw ConfigError("train: temperature must be positive");
        if (reg_weight < 0.0 || ce_weight < 0.0)
            throw ConfigError("train: loss weights must be non-negative");
        if (top_k < 1) throw ConfigError("train: top_k must be positive");
        if (num_prototypes < 1) throw ConfigError("train: num_prototypes must be positive");
        if (top_k > num_prototypes) throw ConfigError("train: top_k cannot exceed num_prototypes");
        if (warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be non-negative");
        if (noise_std < 0.0) throw ConfigError("train: noise_std must be non-negative");
        if (threshold_grid < 0) throw ConfigError("train: threshold_grid must be non-negative");
    }
};

struct EpochRow {
    int epoch = 0;
    double proto = 0.0, group = 0.0, reg = 0.0, ce = 0.0, total = 0.0;
    int group_count = 0;
    double delta = std::numeric_limits<double>::quiet_NaN();
    double labeled_acc = std::numeric_limits<double>::quiet_NaN();
    EvalReport eval;
};

struct RunRecord {
    std::vector<std::pair<std::string, std::string>> config_echo;
    uint64_t seed = 0;
    int initial_group_count = 0;
    std::vector<EpochRow> rows;
    int estimated_class_count = 0;
    std::vector<std::string> warnings;
};

// Everything needed to re-score new data after training.
struct Checkpoint {
    EncoderConfig encoder;
    double temperature = 0.1;
    ParamVector encoder_params;
    Matrix prototypes;
    GroupPartition partition;
    ClassGroupMatching matching;
};

// Pairs every anchor with a positive partner: a seeded-random same-class
// batchmate when the anchor is labeled (falling back to nearest-neighbor
// when it has none), the cosine-nearest other instance when unlabeled.
inline PositivePairing build_pairs(const std::vector<int>& visible_label, const Matrix& plain_z,
                                   Rng& rng) {
    const int B = plain_z.rows();
    if (B < 2) throw ContractViolation("build_pairs: batch of at least 2 required");
    if (static_cast<int>(visible_label.size()) != B)
        throw ContractViolation("build_pairs: one label slot per instance required");
    PositivePairing pairing;
    pairing.positive_of.resize(B);
    pairing.kind.resize(B);
    std::vector<int> candidates;
    for (int i = 0; i < B; ++i) {
        if (visible_label[i] >= 0) {
            candidates.clear();
            for (int j = 0; j < B; ++j)
                if (j != i && visible_label[j] == visible_label[i]) candidates.push_back(j);
            if (!candidates.empty()) {
                pairing.positive_of[i] = candidates[rng.below(candidates.size())];
                pairing.kind[i] = PairKind::labeled_same_class;
                continue;
            }
        }
        int best = -1;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < B; ++j) {
            if (j == i) continue;
            const double sim = dot(plain_z.row(i), plain_z.row(j));
            if (sim > best_sim) {
                best_sim = sim;
                best = j;
            }
        }
        pairing.positive_of[i] = best;
        pairing.kind[i] = PairKind::nearest_neighbor;
    }
    return pairing;
}

class Trainer {
public:
    // Holds out a stratified fraction of the dataset for per-epoch
    // evaluation; the rest is the training set the grouping runs on.
    Trainer(const Dataset& dataset, TrainConfig cfg) : data_(dataset), cfg_(std::move(cfg)), rng_(0) {
        cfg_.validate();
        data_.validate();
        if (cfg_.encoder.input_dim == 0) cfg_.encoder.input_dim = data_.dim();
        if (cfg_.encoder.input_dim != data_.dim())
            throw ContractViolation("Trainer: encoder input_dim does not match the data");
        cfg_.encoder.validate();

        // Labeled known classes must fit under the prototype count.
        std::vector<int> labeled_classes;
        for (int i = 0; i < data_.size(); ++i)
            if (data_.is_labeled[i]) labeled_classes.push_back(data_.labels[i]);
        std::sort(labeled_classes.begin(), labeled_classes.end());
        labeled_classes.erase(std::unique(labeled_classes.begin(), labeled_classes.end()),
                              labeled_classes.end());
        if (cfg_.num_prototypes < static_cast<int>(labeled_classes.size()))
            throw ConfigError("train: num_prototypes must be at least the labeled class count");

        // Salted so the trainer's stream never replays the split's stream
        // when both are configured with the same master seed.
        rng_ = Rng(derive_seed(cfg_.seed, 0x747261696eULL));
        split_train_test();

        encoder_param_count_ = cfg_.encoder.param_count();
        params_ = init_encoder_params(cfg_.encoder);
        params_.resize(encoder_param_count_ +
                       static_cast<size_t>(cfg_.num_prototypes) * cfg_.encoder.embed_dim);
        init_prototypes_from_data();
        adam_ = AdamState::make(params_.size(), cfg_.learning_rate);
        partition_ = GroupPartition::singletons(cfg_.num_prototypes);

        if (!train_labeled_.empty()) refresh_matching();
    }

    const TrainConfig& config() const { return cfg_; }
    const GroupPartition& partition() const { return partition_; }
    const ClassGroupMatching& matching() const { return matching_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    const std::vector<int>& train_indices() const { return train_idx_; }
    const std::vector<int>& test_indices() const { return test_idx_; }

    PrototypeBank bank() const {
        PrototypeBank b;
        b.temperature = cfg_.temperature;
        b.vectors = Matrix(cfg_.num_prototypes, cfg_.encoder.embed_dim);
        std::copy(params_.begin() + encoder_param_count_, params_.end(), b.vectors.data().begin());
        return b;
    }

    std::span<const double> encoder_params() const {
        return {params_.data(), encoder_param_count_};
    }

    EpochRow train_epoch(int epoch_number) {
        std::vector<int> order = train_idx_;
        rng_.shuffle(order);

        double proto_sum = 0.0, group_sum = 0.0, reg_sum = 0.0, ce_sum = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const size_t stop = std::min(order.size(), start + cfg_.batch_size);
            if (stop - start < 2) break;  // a trailing singleton cannot form a pair
            const LossBreakdown b =
                train_batch(std::vector<int>(order.begin() + start, order.begin() + stop),
                            epoch_number, batches);
            proto_sum += b.proto;
            group_sum += b.group;
            reg_sum += b.reg;
            ce_sum += b.ce;
            ++batches;
        }
        if (batches == 0) throw ContractViolation("train_epoch: no batch of size >= 2");

        EpochRow row;
        row.epoch = epoch_number;
        row.proto = proto_sum / batches;
        row.group = group_sum / batches;
        row.reg = reg_sum / batches;
        row.ce = ce_sum / batches;
        row.total = row.proto + row.group + cfg_.reg_weight * row.reg + cfg_.ce_weight * row.ce;

        regroup(epoch_number, row);
        row.group_count = partition_.group_count;
        row.eval = evaluate();
        return row;
    }

    RunRecord run() {
        RunRecord record;
        record.seed = cfg_.seed;
        record.initial_group_count = partition_.group_count;
        for (int e = 1; e <= cfg_.epochs; ++e) record.rows.push_back(train_epoch(e));
        record.estimated_class_count = estimate_class_count(partition_);
        record.warnings = warnings_;
        return record;
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.encoder = cfg_.encoder;
        ck.temperature = cfg_.temperature;
        ck.encoder_params.assign(params_.begin(), params_.begin() + encoder_param_count_);
        ck.prototypes = bank().vectors;
        ck.partition = partition_;
        ck.matching = matching_;
        return ck;
    }

    static uint64_t derive_seed(uint64_t seed, uint64_t salt) {
        uint64_t z = seed ^ salt;
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr double kEvalFraction = 0.2;

    void split_train_test() {
        for (const int cls : data_.class_ids()) {
            std::vector<int> members;
            for (int i = 0; i < data_.size(); ++i)
                if (data_.labels[i] == cls) members.push_back(i);
            rng_.shuffle(members);
            const size_t test_count = static_cast<size_t>(kEvalFraction * members.size());
            for (size_t i = 0; i < members.size(); ++i)
                (i < test_count ? test_idx_ : train_idx_).push_back(members[i]);
        }
        std::sort(train_idx_.begin(), train_idx_.end());
        std::sort(test_idx_.begin(), test_idx_.end());
        for (int i : train_idx_)
            if (data_.is_labeled[i]) train_labeled_.push_back(i);
        if (train_idx_.size() < 2)
            throw ContractViolation("Trainer: fewer than 2 training instances");
        if (test_idx_.empty())
            throw ContractViolation("Trainer: dataset too small to hold out an evaluation split");
    }

    // Prototypes start as balanced k-means centroids of the initial
    // embeddings: seeded sample points refined by capacity-constrained Lloyd
    // rounds, so every centroid ends up carrying an equal share of the data.
    // Sphere-uniform starts leave prototypes that never enter any top-k set
    // and can never merge with a group; unconstrained k-means allocates
    // unevenly across regions, and a region holding more prototypes than the
    // top-k width parks the excess the same way.
    void init_prototypes_from_data() {
        const int K = cfg_.num_prototypes, d = cfg_.encoder.embed_dim;
        Rng seed_rng(derive_seed(cfg_.seed, 0x70726f746fULL));
        std::vector<int> pool = train_idx_;
        seed_rng.shuffle(pool);

        const Matrix z = encode(gather_features(train_idx_), encoder_params(), cfg_.encoder);
        const int n = z.rows();
        Matrix centroids(K, d);
        for (int k = 0; k < K; ++k) {
            const auto it = std::find(train_idx_.begin(), train_idx_.end(), pool[k % pool.size()]);
            const int row = static_cast<int>(it - train_idx_.begin());
            for (int j = 0; j < d; ++j) centroids(k, j) = z(row, j);
        }

        const int capacity = (n + K - 1) / K;
        std::vector<int> owner(n), order(n), slots(K);
        std::vector<double> margin(n);
        for (int round = 0; round < 15; ++round) {
            // Confident instances pick first; everyone lands on the best
            // centroid that still has capacity.
            for (int i = 0; i < n; ++i) {
                double best = -2.0, second = -2.0;
                for (int k = 0; k < K; ++k) {
                    const double sim = dot(z.row(i), centroids.row(k));
                    if (sim > best) {
                        second = best;
                        best = sim;
                    } else if (sim > second) {
                        second = sim;
                    }
                }
                margin[i] = best - second;
            }
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return margin[a] > margin[b] || (margin[a] == margin[b] && a < b);
            });
            std::fill(slots.begin(), slots.end(), capacity);
            for (const int i : order) {
                int best = -1;
                double best_sim = -2.0;
                for (int k = 0; k < K; ++k) {
                    if (slots[k] == 0) continue;
                    const double sim = dot(z.row(i), centroids.row(k));
                    if (sim > best_sim) {
                        best_sim = sim;
                        best = k;
                    }
                }
                owner[i] = best;
                slots[best] -= 1;
            }
            Matrix sums(K, d);
            std::vector<int> counts(K, 0);
            for (int i = 0; i < n; ++i) {
                counts[owner[i]] += 1;
                for (int j = 0; j < d; ++j) sums(owner[i], j) += z(i, j);
            }
            for (int k = 0; k < K; ++k) {
                if (counts[k] == 0) continue;  // cannot happen once n >= K
                const double len = norm(sums.row(k));
                if (len > kNormFloor)
                    for (int j = 0; j < d; ++j) centroids(k, j) = sums(k, j) / len;
            }
        }
        std::copy(centroids.data().begin(), centroids.data().end(),
                  params_.begin() + encoder_param_count_);
        project_prototype_rows();
    }

    Matrix gather_features(const std::vector<int>& idx) const {
        Matrix out(static_cast<int>(idx.size()), data_.dim());
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < data_.dim(); ++j) out(static_cast<int>(r), j) = data_.features(idx[r], j);
        return out;
    }

    LossBreakdown train_batch(const std::vector<int>& idx, int epoch_number, int batch_number) {
        const int B = static_cast<int>(idx.size());
        const Matrix x = gather_features(idx);
        const Matrix x_aug = make_views(x, cfg_.noise_std, rng_);

        const auto enc = encoder_params();
        const Matrix z_plain = encode(x, enc, cfg_.encoder);
        const Matrix z_anchor = encode(x_aug, enc, cfg_.encoder);

        std::vector<int> visible_label(B, -1);
        for (int r = 0; r < B; ++r)
            if (data_.is_labeled[idx[r]]) visible_label[r] = data_.labels[idx[r]];
        const PositivePairing pairing = build_pairs(visible_label, z_plain, rng_);

        std::vector<int> group_label(B, -1);
        for (int r = 0; r < B; ++r) {
            const auto it = matching_.group_of_class.find(visible_label[r]);
            if (visible_label[r] >= 0 && it != matching_.group_of_class.end())
                group_label[r] = it->second;
        }

        const PrototypeBank current = bank();
        LossGrads res = total_loss_and_grads(z_anchor, z_plain, current, partition_, pairing,
                                             group_label, cfg_.reg_weight, cfg_.ce_weight);
        if (!res.breakdown.finite()) {
            std::ostringstream msg;
            msg << "non-finite loss at epoch " << epoch_number << " batch " << batch_number
                << " (proto=" << res.breakdown.proto << " group=" << res.breakdown.group
                << " reg=" << res.breakdown.reg << " ce=" << res.breakdown.ce << ")";
            throw TrainingAbortError(msg.str());
        }

        ParamVector grad(params_.size(), 0.0);
        const ParamVector g_aug = encode_backward(x_aug, enc, res.d_anchor, cfg_.encoder);
        const ParamVector g_plain = encode_backward(x, enc, res.d_plain, cfg_.encoder);
        for (size_t i = 0; i < encoder_param_count_; ++i) grad[i] = g_aug[i] + g_plain[i];
        std::copy(res.d_prototypes.data().begin(), res.d_prototypes.data().end(),
                  grad.begin() + encoder_param_count_);

        adam_step(params_, grad, adam_);
        project_prototype_rows();
        return res.breakdown;
    }

    void project_prototype_rows() {
        const int K = cfg_.num_prototypes, d = cfg_.encoder.embed_dim;
        for (int k = 0; k < K; ++k)
            l2_normalize_row({params_.data() + encoder_param_count_ + static_cast<size_t>(k) * d,
                              static_cast<size_t>(d)},
                             k);
    }

    void regroup(int epoch_number, EpochRow& row) {
        if (epoch_number <= cfg_.warmup_epochs) {
            // Partition untouched during warm-up; the matching still tracks
            // the moving encoder so the supervised term stays meaningful.
            if (!train_labeled_.empty()) {
                refresh_matching();
                row.labeled_acc = matching_.accuracy();
            }
            return;
        }

        const Matrix z = encode(gather_features(train_idx_), encoder_params(), cfg_.encoder);
        const AssignmentMatrix p = assign_prototypes(z, bank());
        const RepresentingSets sets = representing_sets(p, cfg_.top_k);
        const Matrix affinity = jaccard_affinity(sets);
        const std::vector<long> argmax_counts = argmax_instance_counts(p);

        std::vector<double> candidates;
        if (cfg_.threshold_grid > 0) {
            for (int i = 0; i < cfg_.threshold_grid; ++i)
                candidates.push_back(static_cast<double>(i) / cfg_.threshold_grid);
            candidates.push_back(1.0);
        } else {
            candidates = threshold_candidates(affinity);
        }

        if (train_labeled_.empty()) {
            const ThresholdChoice choice =
                choose_threshold_unsupervised(affinity, candidates, argmax_counts);
            partition_ = choice.partition;
            row.delta = choice.threshold;
            return;
        }

        AssignmentMatrix p_labeled;
        p_labeled.level = AssignLevel::prototype;
        p_labeled.probs = Matrix(static_cast<int>(train_labeled_.size()), p.cols());
        std::vector<int> class_ids(train_labeled_.size());
        int r = 0;
        for (size_t t = 0; t < train_idx_.size(); ++t) {
            if (!data_.is_labeled[train_idx_[t]]) continue;
            for (int k = 0; k < p.cols(); ++k)
                p_labeled.probs(r, k) = p.probs(static_cast<int>(t), k);
            class_ids[r] = data_.labels[train_idx_[t]];
            ++r;
        }

        const ThresholdChoice choice =
            tune_threshold(affinity, p_labeled, class_ids, candidates, argmax_counts);
        if (!choice.feasible) {
            warnings_.push_back("epoch " + std::to_string(epoch_number) +
                                ": no threshold yields enough groups for the known classes; "
                                "keeping the previous partition");
            return;
        }
        partition_ = choice.partition;
        row.delta = choice.threshold;
        refresh_matching();
        row.labeled_acc = matching_.accuracy();
    }

    void refresh_matching() {
        const Matrix z = encode(gather_features(train_labeled_), encoder_params(), cfg_.encoder);
        const AssignmentMatrix q = assign_groups(assign_prototypes(z, bank()), partition_);
        std::vector<int> class_ids(train_labeled_.size());
        for (size_t i = 0; i < train_labeled_.size(); ++i)
            class_ids[i] = data_.labels[train_labeled_[i]];
        matching_ = match_classes_to_groups(q, class_ids);
    }

    EvalReport evaluate() const {
        const Matrix z = encode(gather_features(test_idx_), encoder_params(), cfg_.encoder);
        const AssignmentMatrix q = assign_groups(assign_prototypes(z, bank()), partition_);
        std::vector<int> pred(test_idx_.size()), truth(test_idx_.size());
        std::vector<uint8_t> known(test_idx_.size());
        for (size_t i = 0; i < test_idx_.size(); ++i) {
            const auto row = q.probs.row(static_cast<int>(i));
            int best = 0;
            for (int g = 1; g < q.cols(); ++g)
                if (row[g] > row[best]) best = g;
            pred[i] = best;
            truth[i] = data_.labels[test_idx_[i]];
            known[i] = data_.is_known[test_idx_[i]];
        }
        return open_world_report(pred, truth, known, matching_, partition_);
    }

    Dataset data_;
    TrainConfig cfg_;
    Rng rng_;
    std::vector<int> train_idx_, test_idx_, train_labeled_;
    ParamVector params_;  // encoder parameters then prototype rows
    size_t encoder_param_count_ = 0;
    AdamState adam_;
    GroupPartition partition_;
    ClassGroupMatching matching_;
    std::vector<std::string> warnings_;
};

}  // namespace openncd
