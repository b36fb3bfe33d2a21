#include "ddl/dape.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ddl/errors.hpp"
#include "ddl/prompts.hpp"

using nlohmann::json;

namespace ddl {

namespace {

std::string origin_name(PromptOrigin o) {
    switch (o) {
        case PromptOrigin::Vanilla: return "vanilla";
        case PromptOrigin::Seed: return "seed";
        case PromptOrigin::Evolved: return "evolved";
    }
    return "?";
}

PromptOrigin origin_from(const std::string& s) {
    if (s == "vanilla") return PromptOrigin::Vanilla;
    if (s == "seed") return PromptOrigin::Seed;
    if (s == "evolved") return PromptOrigin::Evolved;
    throw Error("unknown prompt origin: " + s);
}

std::string format_score(double s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", s);
    return buf;
}

std::string format_records(const std::vector<const PromptRecord*>& records) {
    std::ostringstream os;
    for (const PromptRecord* r : records)
        os << "Prompt: \"" << r->text << "\" (Score: " << format_score(r->score) << ")\n";
    return os.str();
}

std::vector<const PromptRecord*> scored_sorted_desc(const PromptHistory& history,
                                                    bool skip_vanilla = false) {
    std::vector<const PromptRecord*> out;
    for (const auto& r : history.records) {
        if (!r.scored) throw Error("partition requires fully scored history");
        if (skip_vanilla && r.origin == PromptOrigin::Vanilla) continue;
        out.push_back(&r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PromptRecord* a, const PromptRecord* b) { return a->score > b->score; });
    return out;
}

}  // namespace

double PromptHistory::baseline() const { return vanilla().score; }

const PromptRecord& PromptHistory::vanilla() const {
    for (const auto& r : records)
        if (r.origin == PromptOrigin::Vanilla) {
            if (!r.scored) throw Error("vanilla prompt is unscored");
            return r;
        }
    throw Error("history has no vanilla record");
}

std::vector<std::string> HttpMetaProposer::initial_variants(const std::string& vanilla) {
    const std::string prompt = prompts::fill(prompts::kMetaInit, "VANILLA_INSTRUCTION", vanilla);
    return parse_init_variants(client_.complete_text(prompt));
}

std::string HttpMetaProposer::refine(MetaPromptKind, const std::string& context) {
    return parse_improved_prompt(client_.complete_text(context));
}

std::vector<std::string> ScriptedMetaProposer::initial_variants(const std::string& vanilla) {
    return {
        "Analyze this MRI image step-by-step, then " + vanilla,
        "Act as an expert neuroradiologist. " + vanilla,
        vanilla + " Double-check that every box tightly encloses the abnormal region.",
        "Carefully inspect the scan for lesions, tumors or infarcts. " + vanilla,
        vanilla + " Respond with JSON only, no commentary.",
    };
}

std::string ScriptedMetaProposer::refine(MetaPromptKind, const std::string&) {
    return "Examine the scan for clinically significant abnormalities and " +
           std::string(prompts::kVanilla);
}

PromptHistory seed_population(const std::string& vanilla, MetaProposer& meta) {
    PromptHistory history;
    history.records.push_back({vanilla, 0.0, 0, PromptOrigin::Vanilla, false});
    for (const std::string& variant : meta.initial_variants(vanilla))
        history.records.push_back({variant, 0.0, 0, PromptOrigin::Seed, false});
    return history;
}

int window_size(int g, int history_len) {
    const int progress = std::max(3, g / 2 + 1);
    const int bound = std::max(1, history_len / 2);
    return std::min(progress, bound);
}

Partition partition(const PromptHistory& history, int k) {
    if (history.records.size() < 2)
        throw InsufficientHistory("partition needs at least 2 records");
    // The vanilla record is the fixed reference y*, not a candidate: leaving
    // it in the pool would pin min(failure) <= y* and lock out the
    // exploitative mode entirely.
    const auto sorted = scored_sorted_desc(history, /*skip_vanilla=*/true);
    if (sorted.empty()) throw InsufficientHistory("partition needs non-vanilla records");
    k = std::min<int>(k, static_cast<int>(sorted.size()));
    Partition part;
    part.k = k;
    part.success.assign(sorted.begin(), sorted.begin() + k);
    // Bottom-k ascending, re-sorted stably so ties keep insertion order.
    auto asc = sorted;
    std::stable_sort(asc.begin(), asc.end(), [](const PromptRecord* a, const PromptRecord* b) {
        return a->score < b->score;
    });
    part.failure.assign(asc.begin(), asc.begin() + k);
    double min_failure = part.failure.front()->score;
    for (const PromptRecord* r : part.failure) min_failure = std::min(min_failure, r->score);
    part.exploitative = min_failure > history.baseline();
    return part;
}

std::string assemble_context(const Partition& part, const PromptRecord& vanilla,
                             MetaPromptKind mode) {
    if (mode == MetaPromptKind::Init) throw Error("assemble_context is for refinement modes");
    std::string tpl(mode == MetaPromptKind::Contrastive ? prompts::kMetaContrastive
                                                        : prompts::kMetaExploitative);
    std::string out = prompts::fill(tpl, "SUCCESS_TAIL", format_records(part.success));
    out = prompts::fill(out, "FAILURE_BULK", format_records(part.failure));
    if (mode == MetaPromptKind::Exploitative)
        out = prompts::fill(out, "BASE_PROMPT",
                            "Prompt: \"" + vanilla.text +
                                "\" (Score: " + format_score(vanilla.score) + ")\n");
    return out;
}

bool has_converged(const PromptHistory& history) {
    if (history.records.size() < 3) throw InsufficientHistory("convergence needs 3 records");
    const auto sorted = scored_sorted_desc(history);
    const double mean = (sorted[0]->score + sorted[1]->score + sorted[2]->score) / 3.0;
    double var = 0;
    for (int i = 0; i < 3; ++i) var += (sorted[i]->score - mean) * (sorted[i]->score - mean);
    return std::sqrt(var / 3.0) < 1e-4;
}

PromptRecord evolve(PromptHistory& history, MetaProposer& meta, const PromptScorer& scorer,
                    const EvolveOptions& opts) {
    for (auto& r : history.records) {
        if (!r.scored) {
            r.score = scorer(r.text);
            r.scored = true;
        }
    }
    for (int g = 1; g <= opts.max_generations; ++g) {
        if (has_converged(history)) break;
        const int k = window_size(g, static_cast<int>(history.records.size()));
        const Partition part = partition(history, k);
        const MetaPromptKind mode =
            part.exploitative ? MetaPromptKind::Exploitative : MetaPromptKind::Contrastive;
        const std::string context = assemble_context(part, history.vanilla(), mode);
        std::string proposal;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            try {
                proposal = meta.refine(mode, context);
                ok = true;
            } catch (const Error&) {
            }
        }
        if (!ok) continue;  // generation skipped after one retry
        PromptRecord record{proposal, scorer(proposal), g, PromptOrigin::Evolved, true};
        history.records.push_back(std::move(record));
    }
    if (!opts.history_path.empty()) write_history_jsonl(history, opts.history_path);
    const auto best = std::max_element(
        history.records.begin(), history.records.end(),
        [](const PromptRecord& a, const PromptRecord& b) { return a.score < b.score; });
    return *best;
}

void write_history_jsonl(const PromptHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write history: " + path);
    for (const auto& r : history.records) {
        const json line = {{"text", r.text},
                           {"score", r.score},
                           {"generation", r.generation},
                           {"origin", origin_name(r.origin)}};
        out << line.dump() << "\n";
    }
}

PromptHistory load_history_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read history: " + path);
    PromptHistory history;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        history.records.push_back({j.at("text").get<std::string>(), j.at("score").get<double>(),
                                   j.at("generation").get<int>(),
                                   origin_from(j.at("origin").get<std::string>()), true});
    }
    return history;
}

}  // namespace ddl
