#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "focusmix/app/config.hpp"
#include "focusmix/app/model.hpp"
#include "focusmix/eval/metrics.hpp"

namespace focusmix::app {

// "auto" resolves to the strategy the model kind was built for.
std::string resolve_strategy(const ModelConfig& model, const DecodeConfig& decode);
// ConfigError when the strategy (or upper-bound mode) cannot run on this model.
void check_compatible(const ModelConfig& model, const DecodeConfig& decode);

// Hypotheses for record `index` (the index seeds sampling), in ranking order.
// Upper-bound mode decodes once per gold guide.
std::vector<generator::Hypothesis> decode_record(const Model& model, const DecodeConfig& decode,
                                                 const corpus::Record& record, std::size_t index);

struct SourceOutput {
  std::string source_id;
  std::vector<generator::Hypothesis> hyps;
};

// Every record, in parallel across records. Upper-bound mode needs guides on
// every record.
std::vector<SourceOutput> generate_all(const Model& model, const DecodeConfig& decode,
                                       const std::vector<corpus::Record>& records);

// One line per hypothesis:
// {"source_id","rank","tokens","log_prob","truncated"[,"expert"][,"mask"],"upper_bound"}
void write_generations(const std::filesystem::path& path, const std::vector<SourceOutput>& outputs,
                       const corpus::Vocabulary& vocab, bool upper_bound);

struct GenerationLine {
  std::string source_id;
  std::size_t rank = 0;
  corpus::Tokens tokens;
  double log_prob = 0.0;
};
std::vector<GenerationLine> read_generations(const std::filesystem::path& path);

eval::Ranking parse_ranking(const std::string& name);

// One set per (record, target): the record's hypotheses against that target.
// Generations are matched to records by source id (the record index).
// InputError when a record has no generations or an id is unknown.
std::vector<eval::HypothesisSet> build_sets(const std::vector<GenerationLine>& lines,
                                            const std::vector<corpus::Record>& references,
                                            eval::Ranking ranking);
std::vector<eval::HypothesisSet> build_sets(const std::vector<SourceOutput>& outputs,
                                            const corpus::Vocabulary& vocab,
                                            const std::vector<corpus::Record>& references,
                                            eval::Ranking ranking);

// Attention CSV per hypothesis: dir/<source_id>_<rank>.csv
void dump_all_attention(const std::filesystem::path& dir, const std::vector<SourceOutput>& outputs,
                        const std::vector<corpus::Record>& records, const corpus::Vocabulary& vocab);

}  // namespace focusmix::app
