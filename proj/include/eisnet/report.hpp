#pragma once

// Report files. Every CSV here has a parser, and emit → parse → emit is a
// fixed point because numbers use shortest round-trip formatting.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eisnet/config.hpp"
#include "eisnet/trainer.hpp"

namespace eisnet {

struct RunManifest {
    std::string command;
    std::string config_text; // to_config_text of the resolved config
    std::uint64_t dataset_fingerprint = 0;
    std::uint64_t permutation_fingerprint = 0;
    std::string version = EISNET_VERSION;
    std::string timestamp; // UTC ISO-8601; not hashed

    /// 16 hex digits over everything but the timestamp and the jobs key.
    std::string hash() const;
};

RunManifest make_manifest(std::string command, const ExperimentConfig& cfg, std::uint64_t dataset_fp,
                          std::uint64_t perm_fp);

std::string hex64(std::uint64_t v);
std::string utc_timestamp();

// Per-epoch metrics: epoch,lr,cls,triplet,aux,total,source_accuracy
std::string metrics_csv(const std::vector<EpochLog>& epochs);
std::vector<EpochLog> parse_metrics_csv(std::string_view text);

// Per-step losses: step,epoch,cls,triplet,aux,total,cls_count,cls_correct,anchors
std::string steps_csv(const std::vector<StepLog>& steps);
std::vector<StepLog> parse_steps_csv(std::string_view text);

// Leave-one-domain-out, one row per run: method,domain,seed,target_accuracy
std::string loo_runs_csv(const LooTable& t);
LooTable parse_loo_runs_csv(std::string_view text);

// Leave-one-domain-out summary: method,<domain>_mean,<domain>_std,...,avg_mean,avg_std
struct LooSummaryRow {
    std::string method;
    std::vector<MeanStd> per_domain;
    MeanStd average;
};
struct LooSummary {
    std::vector<std::string> domains;
    std::vector<LooSummaryRow> rows;
};
LooSummary summarize(const LooTable& t);
std::string loo_summary_csv(const LooSummary& s);
LooSummary parse_loo_summary_csv(std::string_view text);

// Ablation, one column per axis value: row,<v1>,<v2>,...; rows seed=<s> then mean and std.
std::string ablation_csv(const AblationTable& t);
/// axis and target_domain are not in the CSV; they come from the caller.
AblationTable parse_ablation_csv(std::string_view text, AblationAxis axis, std::string target_domain);

/// {"manifest": ..., "payload": ..., "timing": ...}. `payload` must be
/// deterministic; wall-clock numbers belong in `timing`.
std::string summary_json(const RunManifest& m, const std::string& payload_json, double wall_clock_seconds);
/// Payload part of a summary document, re-serialized canonically.
std::string summary_payload(std::string_view summary_text);

std::string train_payload_json(const MetricsLog& log);
std::string loo_payload_json(const LooTable& t);
std::string ablation_payload_json(const AblationTable& t);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

} // namespace eisnet
