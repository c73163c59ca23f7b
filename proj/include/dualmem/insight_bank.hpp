#pragma once

// External memory: insights distilled from successful trajectories, keyed by
// the embedding of the query that produced them, retrieved by cosine
// similarity against a new task query.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualmem/context.hpp"
#include "dualmem/gateway.hpp"
#include "dualmem/insight.hpp"
#include "dualmem/trajectory.hpp"

namespace dualmem {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) const = 0;

    std::vector<float> embed(const std::string& text) const;
};

/// Dependency-free fallback: lower-cased alphanumeric tokens hashed into a
/// signed bag-of-words vector, L2-normalised. Deterministic across runs and
/// platforms; carries no semantic quality beyond token overlap.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 384, std::uint64_t seed = 0x5eed'd0a1'f00dULL);

    std::string id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

struct EmbedderError : Error {
    using Error::Error;
};

/// Client for the embedding service (`POST /embed`, `GET /health`).
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::optional<std::string> model_id = std::nullopt,
                 double timeout_s = 30.0);

    /// Queries /health for model id and dimension.
    void connect();

    std::string id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) const override;

    /// JSON request body for a batch, as sent on the wire.
    std::string request_body(const std::vector<std::string>& texts) const;

private:
    std::string base_url_;
    std::optional<std::string> model_id_;
    double timeout_s_;
    std::size_t dim_ = 0;
    std::string served_model_;
};

/// L2-normalises into float32. Throws Error on a zero vector.
std::vector<float> normalize(std::span<const float> v);
double dot(std::span<const float> a, std::span<const float> b);

struct BankEntry {
    std::string hist_query;
    std::vector<float> embedding;  // unit norm
    std::vector<Insight> insights;
    std::string source_model;
    std::optional<std::string> site_tag;

    bool operator==(const BankEntry&) const = default;
};

struct InsightBank {
    std::vector<BankEntry> entries;
    std::string embedder_id;
    std::size_t dim = 0;

    std::size_t size() const { return entries.size(); }
    bool operator==(const InsightBank&) const = default;
};

struct ExtractionError : Error {
    using Error::Error;
};
struct EmptyBankError : Error {
    using Error::Error;
};
struct EmbedderMismatchError : Error {
    using Error::Error;
};
struct BankFormatError : Error {
    using Error::Error;
};
struct ChecksumError : Error {
    using Error::Error;
};

struct RejectedLine {
    std::string line;
    std::string reason;
};

struct InsightParse {
    std::vector<Insight> accepted;
    std::vector<RejectedLine> rejected;
};

/// Parses abstractor output: one insight per line, `[Topic Tag] text`.
/// Lines with URL literals, unknown tags, empty bodies or no tag are rejected.
InsightParse parse_insight_lines(std::string_view text);

/// Sends the extraction prompt and the trajectory transcript to `abstractor`.
/// Throws ExtractionError if no valid insight comes back.
std::vector<Insight> extract_insights(const Trajectory& traj, ModelGateway& abstractor,
                                      const PromptSet& prompts);

/// One entry per successful trajectory, in input order. Trajectories whose
/// extraction fails are skipped with a warning.
InsightBank build_bank(const std::vector<Trajectory>& trajectories, const Embedder& embedder,
                       ModelGateway& abstractor, const PromptSet& prompts);

/// Top min(i, N) entries by cosine similarity, ties to the lower index.
std::vector<InsightSet> retrieve(const InsightBank& bank, const std::string& q_new, int i,
                                 const Embedder& embedder);

/// Same ranking for an already-normalised query vector.
std::vector<InsightSet> retrieve_by_vector(const InsightBank& bank, std::span<const float> query, int i);

inline constexpr int kBankFormatVersion = 1;

std::string serialize_bank(const InsightBank& bank);
void save_bank(const InsightBank& bank, const std::filesystem::path& path);
/// Throws FormatVersionError, ChecksumError or BankFormatError.
InsightBank parse_bank(std::string_view text);
InsightBank load_bank(const std::filesystem::path& path);

/// Little-endian float32 array as base64, and back.
std::string encode_embedding(std::span<const float> v);
std::vector<float> decode_embedding(std::string_view b64);

/// Read-only bank handle shared by task runners; counts retrievals.
class BankRetriever {
public:
    BankRetriever(const InsightBank& bank, const Embedder& embedder);

    std::vector<InsightSet> retrieve(const std::string& q_new, int i) const;
    std::size_t calls() const { return calls_.load(); }

private:
    const InsightBank& bank_;
    const Embedder& embedder_;
    mutable std::atomic<std::size_t> calls_{0};
};

}  // namespace dualmem
