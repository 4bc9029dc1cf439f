#include <cmath>

#include <catch_amalgamated.hpp>

#include "openncd/data.hpp"
#include "openncd/rng.hpp"
#include "openncd/trainer.hpp"

using namespace openncd;
using Catch::Approx;

namespace {

Matrix unit_rows(std::vector<std::vector<double>> data) {
    Matrix m(static_cast<int>(data.size()), static_cast<int>(data[0].size()));
    for (size_t i = 0; i < data.size(); ++i) {
        double n2 = 0.0;
        for (double x : data[i]) n2 += x * x;
        for (size_t j = 0; j < data[i].size(); ++j)
            m(static_cast<int>(i), static_cast<int>(j)) = data[i][j] / std::sqrt(n2);
    }
    return m;
}

Dataset tiny_dataset(uint64_t seed) {
    Dataset ds = generate_blobs(4, 20, 6, 5.0, 1.0, seed);
    SplitConfig split;
    split.known_class_fraction = 0.5;
    split.label_fraction = 0.3;
    split.seed = seed;
    return apply_split(std::move(ds), split);
}

TrainConfig tiny_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.num_prototypes = 12;
    cfg.top_k = 3;
    cfg.noise_std = 0.5;
    cfg.seed = seed;
    cfg.encoder.hidden_dims = {16};
    cfg.encoder.embed_dim = 8;
    cfg.encoder.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("pairing: two unlabeled instances pair with each other", "[trainer]") {
    Rng rng(1);
    const Matrix z = unit_rows({{1.0, 0.0}, {0.8, 0.6}});
    const PositivePairing pairing = build_pairs({-1, -1}, z, rng);
    REQUIRE(pairing.positive_of[0] == 1);
    REQUIRE(pairing.positive_of[1] == 0);
    REQUIRE(pairing.kind[0] == PairKind::nearest_neighbor);
}

TEST_CASE("pairing: nearest neighbor matches a brute-force scan", "[trainer]") {
    Rng rng(2);
    Rng data_rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const int B = 3 + static_cast<int>(data_rng.below(6));
        Matrix z(B, 4);
        for (int i = 0; i < B; ++i) {
            const auto v = data_rng.unit_sphere(4);
            for (int j = 0; j < 4; ++j) z(i, j) = v[j];
        }
        const PositivePairing pairing = build_pairs(std::vector<int>(B, -1), z, rng);
        for (int i = 0; i < B; ++i) {
            int best = -1;
            double best_sim = -2.0;
            for (int j = 0; j < B; ++j) {
                if (j == i) continue;
                const double sim = dot(z.row(i), z.row(j));
                if (sim > best_sim) {
                    best_sim = sim;
                    best = j;
                }
            }
            REQUIRE(pairing.positive_of[i] == best);
        }
    }
}

TEST_CASE("pairing: labeled anchors prefer same-class batchmates", "[trainer]") {
    Rng rng(4);
    const Matrix z = unit_rows({{1.0, 0.0}, {0.0, 1.0}, {0.7, 0.7}});
    // instance 2 is the only same-class option for 0 and vice versa
    const PositivePairing pairing = build_pairs({5, -1, 5}, z, rng);
    REQUIRE(pairing.positive_of[0] == 2);
    REQUIRE(pairing.kind[0] == PairKind::labeled_same_class);
    REQUIRE(pairing.positive_of[2] == 0);
    // the lone labeled class member falls back to nearest neighbor
    const PositivePairing lone = build_pairs({5, -1, 7}, z, rng);
    REQUIRE(lone.kind[2] == PairKind::nearest_neighbor);
}

TEST_CASE("pairing rejects singleton batches", "[trainer]") {
    Rng rng(5);
    const Matrix z = unit_rows({{1.0, 0.0}});
    REQUIRE_THROWS_AS(build_pairs({-1}, z, rng), ContractViolation);
}

TEST_CASE("identical seeds give bit-identical runs", "[trainer]") {
    const Dataset ds = tiny_dataset(9);
    const RunRecord a = Trainer(ds, tiny_config(9)).run();
    const RunRecord b = Trainer(ds, tiny_config(9)).run();
    REQUIRE(a.rows.size() == b.rows.size());
    for (size_t e = 0; e < a.rows.size(); ++e) {
        REQUIRE(a.rows[e].total == b.rows[e].total);
        REQUIRE(a.rows[e].proto == b.rows[e].proto);
        REQUIRE(a.rows[e].group_count == b.rows[e].group_count);
        REQUIRE(a.rows[e].eval.all_acc == b.rows[e].eval.all_acc);
    }
    REQUIRE(a.estimated_class_count == b.estimated_class_count);

    TrainConfig other = tiny_config(9);
    other.seed = 10;
    const RunRecord c = Trainer(ds, other).run();
    bool any_diff = false;
    for (size_t e = 0; e < a.rows.size(); ++e) any_diff = any_diff || a.rows[e].total != c.rows[e].total;
    REQUIRE(any_diff);
}

TEST_CASE("run record satisfies its row invariants", "[trainer]") {
    const Dataset ds = tiny_dataset(13);
    TrainConfig cfg = tiny_config(13);
    cfg.epochs = 2;
    const RunRecord record = Trainer(ds, cfg).run();
    REQUIRE(record.initial_group_count == cfg.num_prototypes);
    REQUIRE(record.rows.size() == 2);
    for (const EpochRow& row : record.rows) {
        REQUIRE(row.total ==
                Approx(row.proto + row.group + cfg.reg_weight * row.reg + cfg.ce_weight * row.ce)
                    .margin(1e-12));
        REQUIRE(row.eval.known_acc >= 0.0);
        REQUIRE(row.eval.known_acc <= 1.0);
        REQUIRE(row.group_count >= 1);
        REQUIRE(row.group_count <= cfg.num_prototypes);
    }
    REQUIRE(record.estimated_class_count == record.rows.back().group_count);
}

TEST_CASE("prototypes stay unit-norm through training", "[trainer]") {
    const Dataset ds = tiny_dataset(17);
    TrainConfig cfg = tiny_config(17);
    cfg.epochs = 1;
    Trainer trainer(ds, cfg);
    trainer.train_epoch(1);
    const PrototypeBank bank = trainer.bank();
    for (int k = 0; k < bank.count(); ++k)
        REQUIRE(norm(bank.vectors.row(k)) == Approx(1.0).margin(1e-9));
}

TEST_CASE("label-free mode runs end to end", "[trainer]") {
    Dataset ds = generate_blobs(4, 20, 6, 5.0, 1.0, 21);  // no split: nothing labeled
    TrainConfig cfg = tiny_config(21);
    cfg.ce_weight = 0.0;
    cfg.epochs = 2;
    Trainer trainer(ds, cfg);
    const RunRecord record = trainer.run();
    REQUIRE(record.rows.size() == 2);
    for (const EpochRow& row : record.rows) {
        REQUIRE(row.ce == 0.0);
        REQUIRE(std::isnan(row.labeled_acc));
        REQUIRE(row.eval.known_acc == 1.0);  // vacuously: no known instances
    }
    REQUIRE(trainer.matching().group_of_class.empty());
}

TEST_CASE("warm-up postpones regrouping", "[trainer]") {
    const Dataset ds = tiny_dataset(23);
    TrainConfig cfg = tiny_config(23);
    cfg.epochs = 3;
    cfg.warmup_epochs = 2;
    const RunRecord record = Trainer(ds, cfg).run();
    REQUIRE(record.rows[0].group_count == cfg.num_prototypes);
    REQUIRE(record.rows[1].group_count == cfg.num_prototypes);
    REQUIRE(std::isnan(record.rows[0].delta));
}

TEST_CASE("trainer validates its configuration against the data", "[trainer]") {
    const Dataset ds = tiny_dataset(29);
    TrainConfig bad_batch = tiny_config(29);
    bad_batch.batch_size = 1;
    REQUIRE_THROWS_AS(Trainer(ds, bad_batch), ConfigError);

    TrainConfig too_few = tiny_config(29);
    too_few.num_prototypes = 1;  // two labeled classes exist
    REQUIRE_THROWS_AS(Trainer(ds, too_few), ConfigError);

    TrainConfig wrong_dim = tiny_config(29);
    wrong_dim.encoder.input_dim = 5;
    REQUIRE_THROWS_AS(Trainer(ds, wrong_dim), ContractViolation);
}
