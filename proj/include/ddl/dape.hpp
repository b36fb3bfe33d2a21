#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddl/lvlm_client.hpp"

namespace ddl {

enum class PromptOrigin { Vanilla, Seed, Evolved };

struct PromptRecord {
    std::string text;
    double score = 0.0;
    int generation = 0;
    PromptOrigin origin = PromptOrigin::Vanilla;
    bool scored = false;
};

// Append-only pool of every prompt evaluated so far. The vanilla record is
// always present and its score is the reference threshold y*.
struct PromptHistory {
    std::vector<PromptRecord> records;

    double baseline() const;  // vanilla score; throws if unscored
    const PromptRecord& vanilla() const;
};

struct Partition {
    std::vector<const PromptRecord*> success;  // top-k, score descending
    std::vector<const PromptRecord*> failure;  // bottom-k, score ascending
    int k = 0;
    bool exploitative = false;  // min(failure) > y*
};

// Source of meta-optimizer completions (HTTP-backed or scripted).
class MetaProposer {
public:
    virtual ~MetaProposer() = default;
    virtual std::vector<std::string> initial_variants(const std::string& vanilla) = 0;
    virtual std::string refine(MetaPromptKind kind, const std::string& context) = 0;
};

class HttpMetaProposer : public MetaProposer {
public:
    explicit HttpMetaProposer(ModelEndpoint endpoint) : client_(std::move(endpoint)) {}
    std::vector<std::string> initial_variants(const std::string& vanilla) override;
    std::string refine(MetaPromptKind kind, const std::string& context) override;

private:
    ChatClient client_;
};

// Deterministic proposer for mock runs: fixed stylistic variants, refinement
// echoes the current best success prompt.
class ScriptedMetaProposer : public MetaProposer {
public:
    std::vector<std::string> initial_variants(const std::string& vanilla) override;
    std::string refine(MetaPromptKind kind, const std::string& context) override;
};

// Vanilla prompt plus N=5 meta-generated variants, all unscored.
PromptHistory seed_population(const std::string& vanilla, MetaProposer& meta);

// Dynamic success/failure window: min(floor(g/2)+1, floor(|H|/2)) floored at
// the initial k=3, with the history bound winning when it is below 3.
int window_size(int g, int history_len);

// Top-k / bottom-k by score, stable in insertion order on ties.
Partition partition(const PromptHistory& history, int k);

std::string assemble_context(const Partition& part, const PromptRecord& vanilla,
                             MetaPromptKind mode);

// True iff the population std of the top-3 scores is below 1e-4.
bool has_converged(const PromptHistory& history);

struct EvolveOptions {
    int max_generations = 10;
    std::string history_path;  // when set, history is persisted as JSONL
};

using PromptScorer = std::function<double(const std::string& prompt)>;

// Scores any unscored seeds, then iterates partition -> context -> proposal
// -> score until convergence or the generation budget; returns the argmax
// record. A failed proposal is retried once, then the generation is skipped.
PromptRecord evolve(PromptHistory& history, MetaProposer& meta, const PromptScorer& scorer,
                    const EvolveOptions& opts);

void write_history_jsonl(const PromptHistory& history, const std::string& path);
PromptHistory load_history_jsonl(const std::string& path);

}  // namespace ddl
