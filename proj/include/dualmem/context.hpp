#pragma once

// Assembly of the model-facing context.
//
// Normal (full history):
//   [system, query, S_1 .. S_{t-k-1}, S_{t-k}, O_{t-k}, .., S_{t-1}, O_{t-1}, O_t]
// InExMem (summary chain + insights in the system prompt):
//   [system', query, summaries s_1 .. s_{t-1}, O_t]
// InMem drops the insights; ExMem is Normal plus one insight block after the query.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualmem/insight.hpp"
#include "dualmem/internal_memory.hpp"
#include "dualmem/step_record.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

struct TemplateError : Error {
    using Error::Error;
};

/// The five prompt templates, loaded from `base.txt`, `in_mem.txt`,
/// `extraction.txt`, `dual.txt` and `judge.txt`.
struct PromptSet {
    std::string base;        // plain agent prompt
    std::string in_mem;      // agent prompt with summary instructions
    std::string extraction;  // abstractor prompt, slot {query}
    std::string dual;        // agent prompt with summary + insights, slot {insights}
    std::string judge;       // judge prompt, slots {query} {answer}

    static PromptSet load(const std::filesystem::path& dir);
};

/// Placeholder slots each template must contain exactly once.
std::vector<std::string> required_slots(std::string_view template_name);

/// Throws TemplateError if a declared slot is missing or repeated.
void validate(const PromptSet& prompts);

/// Replaces `{name}` slots. Slots not in `values` are left alone.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Characters/4 (rounded up) per text segment, fixed cost per image.
struct TokenEstimator {
    std::int64_t image_cost = 1100;

    std::int64_t text_tokens(std::string_view text) const;
};

enum class SegmentKind {
    SystemPrompt,
    Query,
    InsightBlock,
    SummaryBlock,
    StepText,
    ObservationText,
    ObservationImage,
};

std::string_view to_string(SegmentKind k);

struct Segment {
    SegmentKind kind;
    std::string payload;           // text, or image reference for ObservationImage
    std::int64_t token_count = 0;
    std::optional<int> step;       // step the segment describes, if any

    bool operator==(const Segment&) const = default;
};

struct ContextBundle {
    std::vector<Segment> segments;
    Mode mode = Mode::Normal;

    std::size_t count(SegmentKind k) const;
    bool operator==(const ContextBundle&) const = default;
};

struct WindowError : Error {
    using Error::Error;
};
struct OrderError : Error {
    using Error::Error;
};
struct ModeError : Error {
    using Error::Error;
};

/// Full-history context with observations for the last min(k, t-1) steps.
ContextBundle assemble_vanilla_context(const PromptSet& prompts, const Query& q,
                                       const std::vector<StepRecord>& history, int k,
                                       const Observation& current,
                                       const TokenEstimator& est = {});

/// Memory-mode context. For ExMem, `history` and `k` are used as in the
/// vanilla context and `internal` must be empty; for InMem/InExMem `history`
/// is ignored and must not be passed (only the summaries are read).
ContextBundle assemble_m2_context(const PromptSet& prompts, const Query& q,
                                  const InternalMemory& internal,
                                  const std::vector<InsightSet>& external,
                                  const Observation& current, Mode mode,
                                  const TokenEstimator& est = {});

ContextBundle assemble_exmem_context(const PromptSet& prompts, const Query& q,
                                     const std::vector<StepRecord>& history, int k,
                                     const std::vector<InsightSet>& external,
                                     const Observation& current,
                                     const TokenEstimator& est = {});

/// Sum of per-segment estimates under `est`.
std::int64_t count_tokens(const ContextBundle& bundle, const TokenEstimator& est = {});

/// Deterministic text rendering used for golden files and prompt capture.
std::string render_bundle(const ContextBundle& bundle);

// Segment payload renderers, exposed for tests and replay.
std::string render_query(const Query& q);
std::string render_step_text(const StepRecord& s);
std::string render_observation_text(const Observation& o);
std::string render_summary_block(const InternalMemory& mem);
std::string render_insight_block(const std::vector<InsightSet>& sets);

}  // namespace dualmem
