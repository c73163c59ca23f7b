#include "dualmem/insight_bank.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "encoding.hpp"
#include "http_util.hpp"

namespace dualmem {

using nlohmann::json;

namespace {

constexpr std::string_view kBankFormat = "dualmem-insight-bank";

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

json insights_json(const std::vector<Insight>& insights) {
    json arr = json::array();
    for (const Insight& i : insights) arr.push_back({{"tag", to_string(i.tag)}, {"text", i.text}});
    return arr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Embedders

std::vector<float> Embedder::embed(const std::string& text) const { return embed_batch({text}).at(0); }

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error("embedding dimension must be positive");
}

std::string HashingEmbedder::id() const {
    std::ostringstream os;
    os << "hash-bow-v1/d" << dim_ << "/s" << std::hex << seed_;
    return os.str();
}

std::vector<std::vector<float>> HashingEmbedder::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const std::string& text : texts) {
        std::vector<double> acc(dim_, 0.0);
        auto add = [&](std::string_view feature, double weight) {
            const std::uint64_t h = mix(fnv1a(feature, seed_));
            const double sign = (h >> 63) ? 1.0 : -1.0;
            acc[h % dim_] += sign * weight;
        };
        const auto tokens = tokenize(text);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            add(tokens[i], 1.0);
            if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1], 0.5);
        }
        if (std::all_of(acc.begin(), acc.end(), [](double v) { return v == 0.0; })) {
            add("\x01" + text, 1.0);  // no usable tokens; fall back to the raw text
        }
        std::vector<float> v(acc.begin(), acc.end());
        out.push_back(normalize(v));
    }
    return out;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::optional<std::string> model_id, double timeout_s)
    : base_url_(std::move(base_url)), model_id_(std::move(model_id)), timeout_s_(timeout_s) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

void HttpEmbedder::connect() {
    const auto url = detail::parse_url(base_url_);
    auto client = detail::make_client(url, timeout_s_);
    const std::string prefix = url.path == "/" ? "" : url.path;
    auto res = client->Get(prefix + "/health");
    if (!res) throw EmbedderError("embedding service unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw EmbedderError("embedding service not ready (HTTP " + std::to_string(res->status) + ")");
    try {
        const json j = json::parse(res->body);
        served_model_ = j.at("model_id").get<std::string>();
        dim_ = j.at("dim").get<std::size_t>();
    } catch (const json::exception& e) {
        throw EmbedderError(std::string("bad /health response: ") + e.what());
    }
    if (model_id_ && *model_id_ != served_model_) {
        throw EmbedderError("service serves '" + served_model_ + "', expected '" + *model_id_ + "'");
    }
}

std::string HttpEmbedder::id() const { return served_model_.empty() ? model_id_.value_or("") : served_model_; }

std::string HttpEmbedder::request_body(const std::vector<std::string>& texts) const {
    json body{{"texts", texts}};
    if (model_id_) body["model_id"] = *model_id_;
    return body.dump();
}

std::vector<std::vector<float>> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) const {
    constexpr std::size_t kMaxBatch = 256;
    const auto url = detail::parse_url(base_url_);
    const std::string prefix = url.path == "/" ? "" : url.path;
    std::vector<std::vector<float>> out;
    for (std::size_t start = 0; start < texts.size(); start += kMaxBatch) {
        std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                       texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), start + kMaxBatch)));
        auto client = detail::make_client(url, timeout_s_);
        auto res = client->Post(prefix + "/embed", request_body(chunk), "application/json");
        if (!res) throw EmbedderError("embedding request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw EmbedderError("embedding service returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        try {
            const json j = json::parse(res->body);
            const auto vectors = j.at("vectors").get<std::vector<std::vector<float>>>();
            if (vectors.size() != chunk.size()) throw EmbedderError("embedding count does not match request");
            for (const auto& v : vectors) {
                if (dim_ != 0 && v.size() != dim_) throw EmbedderError("embedding has unexpected dimension");
                out.push_back(normalize(v));
            }
        } catch (const json::exception& e) {
            throw EmbedderError(std::string("bad /embed response: ") + e.what());
        }
    }
    return out;
}

std::vector<float> normalize(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq == 0.0) throw Error("cannot normalise a zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// Extraction

InsightParse parse_insight_lines(std::string_view text) {
    InsightParse out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t.rfind("- ", 0) == 0 || t.rfind("* ", 0) == 0) t = trim(std::string_view(t).substr(2));
        if (contains_url_literal(t)) {
            out.rejected.push_back({t, "URL literal"});
            continue;
        }
        if (t.front() != '[') {
            out.rejected.push_back({t, "no topic tag"});
            continue;
        }
        const auto close = t.find(']');
        if (close == std::string::npos) {
            out.rejected.push_back({t, "unterminated topic tag"});
            continue;
        }
        auto tag = topic_tag_from_string(std::string_view(t).substr(1, close - 1));
        if (!tag) {
            out.rejected.push_back({t, "unknown topic tag"});
            continue;
        }
        Insight ins{*tag, trim(std::string_view(t).substr(close + 1))};
        if (ins.text.empty()) {
            out.rejected.push_back({t, "empty insight"});
            continue;
        }
        out.accepted.push_back(std::move(ins));
    }
    return out;
}

std::vector<Insight> extract_insights(const Trajectory& traj, ModelGateway& abstractor, const PromptSet& prompts) {
    if (traj.success != true) {
        throw ExtractionError("trajectory for task '" + traj.task.task_id + "' is not marked successful");
    }
    std::vector<ChatMessage> messages{
        ChatMessage::text(Role::System, fill_template(prompts.extraction, {{"query", traj.task.text}})),
        ChatMessage::text(Role::User, render_transcript(traj))};
    const ModelResponse response = abstractor.complete(messages);
    InsightParse parsed = parse_insight_lines(response.text);
    for (const RejectedLine& r : parsed.rejected) {
        spdlog::warn("task '{}': dropped insight line ({}): {}", traj.task.task_id, r.reason, r.line);
    }
    if (parsed.accepted.empty()) {
        throw ExtractionError("abstractor produced no valid insight for task '" + traj.task.task_id + "'");
    }
    return parsed.accepted;
}

InsightBank build_bank(const std::vector<Trajectory>& trajectories, const Embedder& embedder,
                       ModelGateway& abstractor, const PromptSet& prompts) {
    if (trajectories.empty()) throw EmptyBankError("no trajectories to build a bank from");
    InsightBank bank;
    bank.embedder_id = embedder.id();
    bank.dim = embedder.dim();

    std::vector<std::string> queries;
    for (const Trajectory& t : trajectories) {
        std::vector<Insight> insights;
        try {
            insights = extract_insights(t, abstractor, prompts);
        } catch (const ExtractionError& e) {
            spdlog::warn("skipping trajectory: {}", e.what());
            continue;
        }
        BankEntry entry;
        entry.hist_query = t.task.text;
        entry.insights = std::move(insights);
        entry.source_model = t.config.agent.model_id.empty() ? "unknown" : t.config.agent.model_id;
        entry.site_tag = t.task.site_tag;
        queries.push_back(entry.hist_query);
        bank.entries.push_back(std::move(entry));
    }
    if (bank.entries.empty()) throw EmptyBankError("every trajectory was skipped");

    auto vectors = embedder.embed_batch(queries);
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        if (vectors[i].size() != bank.dim) throw EmbedderError("embedder returned the wrong dimension");
        bank.entries[i].embedding = normalize(vectors[i]);
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Retrieval

std::vector<InsightSet> retrieve_by_vector(const InsightBank& bank, std::span<const float> query, int i) {
    if (bank.entries.empty()) throw EmptyBankError("insight bank is empty");
    if (i < 1) throw Error("insight count must be >= 1");
    if (query.size() != bank.dim) throw EmbedderMismatchError("query dimension does not match the bank");

    const std::size_t n = bank.entries.size();
    std::vector<double> sims(n);
    for (std::size_t j = 0; j < n; ++j) sims[j] = dot(query, bank.entries[j].embedding);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(i), n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });

    std::vector<InsightSet> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) {
        const std::size_t j = order[r];
        out.push_back(InsightSet{j, sims[j], bank.entries[j].insights});
    }
    return out;
}

std::vector<InsightSet> retrieve(const InsightBank& bank, const std::string& q_new, int i, const Embedder& embedder) {
    if (embedder.id() != bank.embedder_id) {
        throw EmbedderMismatchError("bank was built with '" + bank.embedder_id + "', query embedder is '" +
                                    embedder.id() + "'");
    }
    if (bank.entries.empty()) throw EmptyBankError("insight bank is empty");
    const std::vector<float> v = normalize(embedder.embed(q_new));
    return retrieve_by_vector(bank, v, i);
}

BankRetriever::BankRetriever(const InsightBank& bank, const Embedder& embedder) : bank_(bank), embedder_(embedder) {}

std::vector<InsightSet> BankRetriever::retrieve(const std::string& q_new, int i) const {
    ++calls_;
    return dualmem::retrieve(bank_, q_new, i, embedder_);
}

// ---------------------------------------------------------------------------
// Persistence

std::string encode_embedding(std::span<const float> v) {
    std::string bytes;
    bytes.reserve(v.size() * 4);
    for (float f : v) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<char>((bits >> shift) & 0xFF));
    }
    return detail::base64_encode(bytes);
}

std::vector<float> decode_embedding(std::string_view b64) {
    const std::string bytes = detail::base64_decode(b64);
    if (bytes.size() % 4 != 0) throw BankFormatError("embedding byte length is not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

std::string serialize_bank(const InsightBank& bank) {
    json header{{"format", kBankFormat},
                {"version", kBankFormatVersion},
                {"embedder_id", bank.embedder_id},
                {"dim", bank.dim},
                {"entries", bank.entries.size()}};
    std::string out = header.dump() + "\n";
    for (const BankEntry& e : bank.entries) {
        if (e.embedding.size() != bank.dim) throw BankFormatError("entry dimension differs from bank dimension");
        json rec{{"hist_query", e.hist_query},
                 {"embedding", encode_embedding(e.embedding)},
                 {"insights", insights_json(e.insights)},
                 {"source_model", e.source_model},
                 {"site_tag", e.site_tag ? json(*e.site_tag) : json(nullptr)}};
        rec["checksum"] = detail::short_digest(rec.dump());
        out += rec.dump() + "\n";
    }
    return out;
}

void save_bank(const InsightBank& bank, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write bank " + path.string());
    out << serialize_bank(bank);
}

InsightBank parse_bank(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    InsightBank bank;
    std::size_t declared = 0;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            if (!have_header) throw BankFormatError("bank header is not valid JSON");
            throw ChecksumError("bank line " + std::to_string(lineno) + " is corrupt");
        }
        if (!have_header) {
            if (j.value("format", "") != kBankFormat) throw BankFormatError("not an insight bank file");
            const int version = j.value("version", -1);
            if (version != kBankFormatVersion) {
                throw FormatVersionError("unsupported bank format version " + std::to_string(version));
            }
            bank.embedder_id = j.at("embedder_id").get<std::string>();
            bank.dim = j.at("dim").get<std::size_t>();
            declared = j.value("entries", std::size_t{0});
            have_header = true;
            continue;
        }
        if (!j.is_object() || !j.contains("checksum")) throw ChecksumError("bank line " + std::to_string(lineno) + " has no checksum");
        const std::string stored = j["checksum"].get<std::string>();
        j.erase("checksum");
        if (detail::short_digest(j.dump()) != stored) {
            throw ChecksumError("bank line " + std::to_string(lineno) + " fails its checksum");
        }
        try {
            BankEntry e;
            e.hist_query = j.at("hist_query").get<std::string>();
            e.embedding = decode_embedding(j.at("embedding").get<std::string>());
            for (const auto& ij : j.at("insights")) {
                auto tag = topic_tag_from_string(ij.at("tag").get<std::string>());
                if (!tag) throw BankFormatError("bank line " + std::to_string(lineno) + " has an unknown topic tag");
                e.insights.push_back(Insight{*tag, ij.at("text").get<std::string>()});
            }
            e.source_model = j.value("source_model", "");
            if (j.contains("site_tag") && !j["site_tag"].is_null()) e.site_tag = j["site_tag"].get<std::string>();
            if (e.embedding.size() != bank.dim) throw BankFormatError("bank line " + std::to_string(lineno) + " has the wrong dimension");
            if (e.insights.empty()) throw BankFormatError("bank line " + std::to_string(lineno) + " has no insights");
            bank.entries.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw BankFormatError("bank line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    if (!have_header) throw BankFormatError("bank file is empty");
    if (bank.entries.size() != declared) {
        throw ChecksumError("bank declares " + std::to_string(declared) + " entries but holds " +
                            std::to_string(bank.entries.size()));
    }
    return bank;
}

InsightBank load_bank(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read bank " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_bank(ss.str());
}

}  // namespace dualmem
