#pragma once

#include <random>
#include <string>
#include <vector>

#include "dualmem/agent_io.hpp"
#include "dualmem/insight_bank.hpp"

namespace dualmem::test {

class TurnGenerator {
public:
    explicit TurnGenerator(std::uint64_t seed) : rng_(seed) {}

    AgentTurn next(bool with_summary) {
        AgentTurn t;
        t.thought = text(1 + pick(3), 1 + pick(12));
        const ActionType type = kAllActionTypes[pick(kAllActionTypes.size())];
        const ArityRule rule = arity(type);
        t.action.type = type;
        if (rule.element == Requirement::Required || (rule.element == Requirement::Optional && coin())) {
            t.action.element = Coord{range(-50, 2000), range(-50, 2000)};
        }
        if (rule.value == Requirement::Required) t.action.value = value_for(type);
        if (with_summary) t.summary_raw = "[" + line(1 + pick(6)) + "] → [" + line(1 + pick(6)) + "]";
        return t;
    }

private:
    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin() { return pick(2) == 0; }

    std::string word() {
        static const std::vector<std::string> words = {
            "search", "field", "Enter", "price", "tab", "the", "42", "€19.99", "naïve", "menu", "→", "(x)",
            "\"quoted\"", "a/b", "50%", "ok!", "日本", "<b>", "e-mail", "?", "first,", "done."};
        return words[pick(words.size())];
    }

    std::string line(std::size_t n) {
        std::string s = word();
        for (std::size_t i = 1; i < n; ++i) s += " " + word();
        return s;
    }

    std::string text(std::size_t lines, std::size_t words) {
        std::string s = line(words);
        for (std::size_t i = 1; i < lines; ++i) s += "\n" + line(1 + pick(words));
        return s;
    }

    std::string value_for(ActionType type) {
        switch (type) {
            case ActionType::DRAG: return "(" + std::to_string(range(0, 1280)) + "," + std::to_string(range(0, 800)) + ")";
            case ActionType::SCROLL: {
                static const char* dirs[] = {"up", "down", "left", "right"};
                return dirs[pick(4)];
            }
            case ActionType::WAIT: return coin() ? std::to_string(range(0, 30)) : std::to_string(range(0, 9)) + ".5";
            case ActionType::PRESS_KEY: {
                static const char* keys[] = {"Enter", "Tab", "Escape", "ctrl+a", "PageDown"};
                return keys[pick(5)];
            }
            default: return line(1 + pick(8));
        }
    }

    std::mt19937_64 rng_;
};

/// Random unit vector of the given dimension.
inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(dim);
    for (auto& x : v) x = n(rng);
    return normalize(v);
}

}  // namespace dualmem::test
