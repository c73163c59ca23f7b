#include "dualmem/context.hpp"

#include <fstream>
#include <sstream>

namespace dualmem {

namespace {

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw TemplateError("cannot read template " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::vector<std::string>& known_slots() {
    static const std::vector<std::string> slots = {"{query}", "{history_summary}", "{insights}",
                                                   "{observation}", "{answer}"};
    return slots;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

Segment make_text(SegmentKind kind, std::string payload, const TokenEstimator& est,
                  std::optional<int> step = std::nullopt) {
    Segment s{kind, std::move(payload), 0, step};
    s.token_count = est.text_tokens(s.payload);
    return s;
}

void push_observation(std::vector<Segment>& out, const Observation& o, const TokenEstimator& est) {
    out.push_back(make_text(SegmentKind::ObservationText, render_observation_text(o), est, o.step_index));
    out.push_back(Segment{SegmentKind::ObservationImage, o.screenshot, est.image_cost, o.step_index});
}

void check_history(const std::vector<StepRecord>& history, const Observation& current) {
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].step_index != static_cast<int>(i) + 1) {
            throw OrderError("history step " + std::to_string(i + 1) + " has index " +
                             std::to_string(history[i].step_index));
        }
    }
    if (current.step_index != static_cast<int>(history.size()) + 1) {
        throw OrderError("current observation is step " + std::to_string(current.step_index) +
                         " but history holds " + std::to_string(history.size()) + " steps");
    }
}

// Query, then S_1..S_{t-1} with O_j after S_j inside the window, then O_t.
void push_vanilla_body(std::vector<Segment>& out, const std::vector<StepRecord>& history, int k,
                       const Observation& current, const TokenEstimator& est) {
    const int t = current.step_index;
    for (const StepRecord& s : history) {
        out.push_back(make_text(SegmentKind::StepText, render_step_text(s), est, s.step_index));
        if (s.step_index >= t - k) push_observation(out, s.observation, est);
    }
    push_observation(out, current, est);
}

}  // namespace

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    PromptSet p;
    p.base = read_text(dir / "base.txt");
    p.in_mem = read_text(dir / "in_mem.txt");
    p.extraction = read_text(dir / "extraction.txt");
    p.dual = read_text(dir / "dual.txt");
    p.judge = read_text(dir / "judge.txt");
    validate(p);
    return p;
}

std::vector<std::string> required_slots(std::string_view template_name) {
    if (template_name == "dual") return {"{insights}"};
    if (template_name == "extraction") return {"{query}"};
    if (template_name == "judge") return {"{query}", "{answer}"};
    return {};
}

void validate(const PromptSet& prompts) {
    const std::pair<std::string_view, const std::string*> all[] = {
        {"base", &prompts.base},     {"in_mem", &prompts.in_mem}, {"extraction", &prompts.extraction},
        {"dual", &prompts.dual},     {"judge", &prompts.judge}};
    for (const auto& [name, text] : all) {
        if (trim(*text).empty()) throw TemplateError("template '" + std::string(name) + "' is empty");
        for (const std::string& slot : known_slots()) {
            if (count_occurrences(*text, slot) > 1) {
                throw TemplateError("template '" + std::string(name) + "' repeats slot " + slot);
            }
        }
        for (const std::string& slot : required_slots(name)) {
            if (count_occurrences(*text, slot) != 1) {
                throw TemplateError("template '" + std::string(name) + "' lacks slot " + slot);
            }
        }
    }
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::int64_t TokenEstimator::text_tokens(std::string_view text) const {
    const auto chars = static_cast<std::int64_t>(utf8_length(text));
    return (chars + 3) / 4;
}

std::string_view to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::SystemPrompt: return "SystemPrompt";
        case SegmentKind::Query: return "Query";
        case SegmentKind::InsightBlock: return "InsightBlock";
        case SegmentKind::SummaryBlock: return "SummaryBlock";
        case SegmentKind::StepText: return "StepText";
        case SegmentKind::ObservationText: return "ObservationText";
        case SegmentKind::ObservationImage: return "ObservationImage";
    }
    return "StepText";
}

std::size_t ContextBundle::count(SegmentKind k) const {
    std::size_t n = 0;
    for (const Segment& s : segments) n += (s.kind == k);
    return n;
}

std::string render_query(const Query& q) { return "User query: " + q.text; }

std::string render_step_text(const StepRecord& s) {
    const std::string n = std::to_string(s.step_index);
    return "Step " + n + " thought: " + s.thought + "\nStep " + n + " action: " + describe_action(s.action);
}

std::string render_observation_text(const Observation& o) {
    std::string head = "Observation at step " + std::to_string(o.step_index) + " (viewport " +
                       std::to_string(o.viewport.width) + "x" + std::to_string(o.viewport.height) + "):";
    return head + "\n" + o.semantic_text;
}

std::string render_summary_block(const InternalMemory& mem) { return "Historical summary:\n" + mem.render(); }

std::string render_insight_block(const std::vector<InsightSet>& sets) {
    return "Reference insights from similar past tasks (hints only; check them against the current "
           "screenshot before acting):\n" +
           render_insight_sets(sets);
}

ContextBundle assemble_vanilla_context(const PromptSet& prompts, const Query& q,
                                       const std::vector<StepRecord>& history, int k,
                                       const Observation& current, const TokenEstimator& est) {
    if (k < 1) throw WindowError("observation window must be at least 1, got " + std::to_string(k));
    check_history(history, current);
    ContextBundle b;
    b.mode = Mode::Normal;
    b.segments.push_back(make_text(SegmentKind::SystemPrompt, prompts.base, est));
    b.segments.push_back(make_text(SegmentKind::Query, render_query(q), est));
    push_vanilla_body(b.segments, history, k, current, est);
    return b;
}

ContextBundle assemble_exmem_context(const PromptSet& prompts, const Query& q,
                                     const std::vector<StepRecord>& history, int k,
                                     const std::vector<InsightSet>& external,
                                     const Observation& current, const TokenEstimator& est) {
    if (k < 1) throw WindowError("observation window must be at least 1, got " + std::to_string(k));
    check_history(history, current);
    ContextBundle b;
    b.mode = Mode::ExMem;
    b.segments.push_back(make_text(SegmentKind::SystemPrompt, prompts.base, est));
    b.segments.push_back(make_text(SegmentKind::Query, render_query(q), est));
    b.segments.push_back(make_text(SegmentKind::InsightBlock, render_insight_block(external), est));
    push_vanilla_body(b.segments, history, k, current, est);
    return b;
}

ContextBundle assemble_m2_context(const PromptSet& prompts, const Query& q, const InternalMemory& internal,
                                  const std::vector<InsightSet>& external, const Observation& current,
                                  Mode mode, const TokenEstimator& est) {
    switch (mode) {
        case Mode::Normal:
            throw ModeError("Normal mode has no memory; use assemble_vanilla_context");
        case Mode::ExMem:
            if (!internal.empty()) throw ModeError("ExMem mode keeps no internal memory");
            // Without history this is only well-formed at the first step.
            return assemble_exmem_context(prompts, q, {}, 1, external, current, est);
        case Mode::InMem:
            if (!external.empty()) throw ModeError("InMem mode takes no retrieved insights");
            break;
        case Mode::InExMem: break;
    }
    if (internal.size() + 1 != static_cast<std::size_t>(current.step_index)) {
        throw OrderError("internal memory holds " + std::to_string(internal.size()) +
                         " summaries at step " + std::to_string(current.step_index));
    }

    ContextBundle b;
    b.mode = mode;
    std::string system = mode == Mode::InExMem
                             ? fill_template(prompts.dual, {{"insights", render_insight_sets(external)}})
                             : prompts.in_mem;
    b.segments.push_back(make_text(SegmentKind::SystemPrompt, std::move(system), est));
    b.segments.push_back(make_text(SegmentKind::Query, render_query(q), est));
    b.segments.push_back(make_text(SegmentKind::SummaryBlock, render_summary_block(internal), est));
    push_observation(b.segments, current, est);
    return b;
}

std::int64_t count_tokens(const ContextBundle& bundle, const TokenEstimator& est) {
    std::int64_t total = 0;
    for (const Segment& s : bundle.segments) {
        total += s.kind == SegmentKind::ObservationImage ? est.image_cost : est.text_tokens(s.payload);
    }
    return total;
}

std::string render_bundle(const ContextBundle& bundle) {
    std::string system;
    std::string user;
    for (const Segment& s : bundle.segments) {
        if (s.kind == SegmentKind::SystemPrompt) {
            system = s.payload;
            continue;
        }
        if (!user.empty()) user += "\n\n";
        user += s.kind == SegmentKind::ObservationImage ? "[image: " + s.payload + "]" : s.payload;
    }
    return "=== system ===\n" + system + "\n=== user ===\n" + user + "\n";
}

}  // namespace dualmem
