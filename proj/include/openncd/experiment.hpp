// Glue from a parsed configuration to a finished run: dataset construction,
// training, and the machine-readable outputs (per-epoch CSV, summary JSON,
// checkpoint). Output bytes are a pure function of the configuration.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "openncd/config.hpp"
#include "openncd/data.hpp"
#include "openncd/errors.hpp"
#include "openncd/trainer.hpp"

namespace openncd {

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    if (cfg.data_source == "blobs") {
        ds = generate_blobs(cfg.num_classes, cfg.per_class, cfg.dim, cfg.separation, cfg.spread,
                            cfg.data_seed);
    } else {
        ds = load_csv(cfg.csv_path, cfg.csv_has_header);
    }
    if (!cfg.mask_path.empty())
        load_masks(ds, cfg.mask_path);
    else if (cfg.split_enabled)
        ds = apply_split(std::move(ds), cfg.split);
    return ds;
}

inline RunRecord run_experiment(const ExperimentConfig& cfg, Checkpoint* out_checkpoint = nullptr) {
    const Dataset ds = build_dataset(cfg);
    Trainer trainer(ds, cfg.train);
    RunRecord record = trainer.run();
    record.config_echo = config_echo(cfg);
    if (out_checkpoint) *out_checkpoint = trainer.checkpoint();
    return record;
}

namespace detail {

inline std::string csv_number(double x) { return format_double(x); }

}  // namespace detail

inline void write_run_csv(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "epoch,loss_proto,loss_group,loss_reg,loss_ce,loss_total,group_count,delta,"
           "labeled_acc,known_acc,novel_acc,all_acc,nmi\n";
    for (const EpochRow& r : record.rows) {
        out << r.epoch << ',' << detail::csv_number(r.proto) << ',' << detail::csv_number(r.group)
            << ',' << detail::csv_number(r.reg) << ',' << detail::csv_number(r.ce) << ','
            << detail::csv_number(r.total) << ',' << r.group_count << ','
            << detail::csv_number(r.delta) << ',' << detail::csv_number(r.labeled_acc) << ','
            << detail::csv_number(r.eval.known_acc) << ',' << detail::csv_number(r.eval.novel_acc)
            << ',' << detail::csv_number(r.eval.all_acc) << ',' << detail::csv_number(r.eval.nmi)
            << "\n";
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline nlohmann::ordered_json eval_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["known_acc"] = report.known_acc;
    j["novel_acc"] = report.novel_acc;
    j["all_acc"] = report.all_acc;
    j["nmi"] = report.nmi;
    j["estimated_class_count"] = report.estimated_class_count;
    auto confusion = nlohmann::ordered_json::array();
    for (const auto& [key, count] : report.confusion)
        confusion.push_back({{"class", key.first}, {"group", key.second}, {"count", count}});
    j["confusion"] = confusion;
    return j;
}

inline void write_summary_json(const RunRecord& record, const std::string& path) {
    nlohmann::ordered_json j;
    auto config = nlohmann::ordered_json::object();
    for (const auto& [key, value] : record.config_echo) config[key] = value;
    j["config"] = config;
    j["seed"] = record.seed;
    j["epochs_completed"] = record.rows.size();
    j["initial_group_count"] = record.initial_group_count;
    auto series = nlohmann::ordered_json::array();
    series.push_back(record.initial_group_count);
    for (const EpochRow& r : record.rows) series.push_back(r.group_count);
    j["group_count_series"] = series;
    j["estimated_class_count"] = record.estimated_class_count;
    if (!record.rows.empty()) {
        const EpochRow& last = record.rows.back();
        auto final_json = eval_to_json(last.eval);
        final_json["labeled_acc"] = std::isnan(last.labeled_acc)
                                        ? nlohmann::ordered_json()
                                        : nlohmann::ordered_json(last.labeled_acc);
        final_json["delta"] =
            std::isnan(last.delta) ? nlohmann::ordered_json() : nlohmann::ordered_json(last.delta);
        j["final"] = final_json;
    }
    j["warnings"] = record.warnings;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// The effective configuration, directly usable as a config file again.
inline void write_config_echo(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& [key, value] : record.config_echo) out << key << " = " << value << "\n";
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Text checkpoint: encoder shape and parameters, the prototype rows as CSV,
// the partition line, and the class-to-group matching.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "openncd_checkpoint_v1\n";
    out << "temperature " << detail::csv_number(ck.temperature) << "\n";
    out << "input_dim " << ck.encoder.input_dim << "\n";
    out << "hidden_dims " << detail::join_ints(ck.encoder.hidden_dims) << "\n";
    out << "embed_dim " << ck.encoder.embed_dim << "\n";
    out << "activation " << to_string(ck.encoder.activation) << "\n";
    out << "encoder_params " << ck.encoder_params.size() << "\n";
    for (size_t i = 0; i < ck.encoder_params.size(); ++i)
        out << (i ? " " : "") << detail::csv_number(ck.encoder_params[i]);
    out << "\n";
    out << "prototypes " << ck.prototypes.rows() << " " << ck.prototypes.cols() << "\n";
    for (int k = 0; k < ck.prototypes.rows(); ++k) {
        for (int j = 0; j < ck.prototypes.cols(); ++j)
            out << (j ? "," : "") << detail::csv_number(ck.prototypes(k, j));
        out << "\n";
    }
    out << "partition " << detail::join_ints(ck.partition.group_of) << "\n";
    out << "matching ";
    bool first = true;
    for (const auto& [cls, group] : ck.matching.group_of_class) {
        out << (first ? "" : ",") << cls << ':' << group;
        first = false;
    }
    out << "\n";
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
    auto next_line = [&in, line_no = 0L]() mutable {
        std::string line;
        ++line_no;
        if (!std::getline(in, line))
            throw ParseError("checkpoint truncated at line " + std::to_string(line_no), line_no);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };
    auto expect_field = [](const std::string& line, const std::string& name) {
        if (line.rfind(name + " ", 0) != 0 && line != name)
            throw ParseError("checkpoint: expected '" + name + "' line, got '" + line + "'");
        return line.size() > name.size() ? line.substr(name.size() + 1) : std::string();
    };

    if (next_line() != "openncd_checkpoint_v1")
        throw ParseError("not an openncd checkpoint: '" + path + "'");
    Checkpoint ck;
    ck.temperature = detail::to_real("temperature", expect_field(next_line(), "temperature"));
    ck.encoder.input_dim =
        static_cast<int>(detail::to_int("input_dim", expect_field(next_line(), "input_dim")));
    ck.encoder.hidden_dims =
        detail::to_int_list("hidden_dims", expect_field(next_line(), "hidden_dims"));
    ck.encoder.embed_dim =
        static_cast<int>(detail::to_int("embed_dim", expect_field(next_line(), "embed_dim")));
    ck.encoder.activation = activation_from_string(expect_field(next_line(), "activation"));
    const long n_params =
        detail::to_int("encoder_params", expect_field(next_line(), "encoder_params"));
    {
        std::stringstream ss(next_line());
        double x;
        while (ss >> x) ck.encoder_params.push_back(x);
        if (static_cast<long>(ck.encoder_params.size()) != n_params)
            throw ParseError("checkpoint: encoder parameter count mismatch");
    }
    {
        std::stringstream ss(expect_field(next_line(), "prototypes"));
        int K = 0, d = 0;
        ss >> K >> d;
        if (K < 1 || d < 1) throw ParseError("checkpoint: bad prototype shape");
        ck.prototypes = Matrix(K, d);
        for (int k = 0; k < K; ++k) {
            const auto cells = detail::split_cells(next_line());
            if (static_cast<int>(cells.size()) != d)
                throw ParseError("checkpoint: prototype row width mismatch");
            for (int j = 0; j < d; ++j) ck.prototypes(k, j) = detail::parse_double(cells[j], -1);
        }
    }
    ck.partition.group_of = detail::to_int_list("partition", expect_field(next_line(), "partition"));
    if (ck.partition.group_of.empty() ||
        static_cast<int>(ck.partition.group_of.size()) != ck.prototypes.rows())
        throw ParseError("checkpoint: partition length mismatch");
    ck.partition.group_count = 1 + *std::max_element(ck.partition.group_of.begin(),
                                                     ck.partition.group_of.end());
    ck.partition.validate();
    {
        const std::string entries = expect_field(next_line(), "matching");
        std::stringstream ss(entries);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ParseError("checkpoint: bad matching entry");
            const int cls = static_cast<int>(detail::to_int("matching", item.substr(0, colon)));
            const int grp = static_cast<int>(detail::to_int("matching", item.substr(colon + 1)));
            ck.matching.group_of_class[cls] = grp;
        }
    }
    return ck;
}

// Re-scores a dataset against a trained checkpoint. Instances whose class
// appears in the checkpoint matching count as known unless explicit masks
// came with the data.
inline EvalReport evaluate_checkpoint(const Checkpoint& ck, const Dataset& ds, bool masks_given) {
    PrototypeBank bank;
    bank.vectors = ck.prototypes;
    bank.temperature = ck.temperature;
    const Matrix z = encode(ds.features, ck.encoder_params, ck.encoder);
    const AssignmentMatrix q = assign_groups(assign_prototypes(z, bank), ck.partition);
    std::vector<int> pred(ds.size());
    std::vector<uint8_t> known(ds.size());
    for (int i = 0; i < ds.size(); ++i) {
        const auto row = q.probs.row(i);
        int best = 0;
        for (int g = 1; g < q.cols(); ++g)
            if (row[g] > row[best]) best = g;
        pred[i] = best;
        known[i] = masks_given ? ds.is_known[i]
                               : static_cast<uint8_t>(ck.matching.group_of_class.count(ds.labels[i]));
    }
    return open_world_report(pred, ds.labels, known, ck.matching, ck.partition);
}

}  // namespace openncd
