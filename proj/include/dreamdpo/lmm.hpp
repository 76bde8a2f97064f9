#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dreamdpo/errors.hpp"

namespace dreamdpo {

// LMM annotator protocol: a formatted yes/no query plus one image attachment
// per request, a completion text per response. The query template and the
// answer-line grammar are fixed contract surfaces (golden files under
// tests/golden); the transport envelope is adapter-specific.

// ---- query formatting ---------------------------------------------------------

inline std::string lmm_format_query(const std::vector<std::string>& questions) {
    if (questions.empty()) throw ParameterError("lmm query needs at least one question");
    std::string out =
        "[Task Description]: You are an expert in evaluating the alignment between a given "
        "text description and an image. Your task is to answer each of the alignment "
        "questions with either \"Yes\" or \"No\" based on the image. Provide your responses "
        "in the format specified below.\n"
        "\n"
        "[Evaluation Instruction]:\n"
        "1. Carefully analyze the provided image and answer questions based on the image.\n"
        "2. For each question, answer with either \"Yes\" or \"No\". Do not provide "
        "explanations or additional information.\n"
        "\n"
        "[Evaluation Question(s)]:\n";
    for (std::size_t i = 0; i < questions.size(); ++i) {
        out += "Q" + std::to_string(i + 1) + ": " + questions[i] + "\n";
    }
    out += "\n[Output Format]:\n";
    for (std::size_t i = 0; i < questions.size(); ++i) {
        out += "A" + std::to_string(i + 1) + ": [Yes/No]\n";
    }
    return out;
}

// ---- response parsing ----------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

// Counts "yes" over answer lines "A<k>: Yes|No" (case-insensitive, whitespace
// tolerant) for k = 1..n_questions. Non-answer lines are ignored; a malformed
// token on an answer line, or a missing index, raises ResponseParseError with
// the offending index. The first occurrence of an index wins.
inline int lmm_parse_response(const std::string& text, int n_questions) {
    if (n_questions < 1) throw ParameterError("lmm_parse_response: n_questions must be >= 1");
    std::vector<int> answer(static_cast<std::size_t>(n_questions), -1);  // -1 unseen, 0 no, 1 yes
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        const std::string line = detail::trim(raw);
        if (line.size() < 2 || (line[0] != 'A' && line[0] != 'a')) continue;
        std::size_t i = 1;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == 1 || i > 9 || i >= line.size() || line[i] != ':') continue;
        const int idx = std::stoi(line.substr(1, i - 1));
        if (idx < 1 || idx > n_questions) continue;
        if (answer[static_cast<std::size_t>(idx - 1)] != -1) continue;
        const std::string token = detail::lower(detail::trim(line.substr(i + 1)));
        if (token == "yes") {
            answer[static_cast<std::size_t>(idx - 1)] = 1;
        } else if (token == "no") {
            answer[static_cast<std::size_t>(idx - 1)] = 0;
        } else {
            throw ResponseParseError("malformed answer for A" + std::to_string(idx) + ": \"" +
                                         detail::trim(line.substr(i + 1)) + "\"",
                                     idx);
        }
    }
    int yes = 0;
    for (int k = 0; k < n_questions; ++k) {
        const int a = answer[static_cast<std::size_t>(k)];
        if (a == -1) throw ResponseParseError("missing answer for A" + std::to_string(k + 1), k + 1);
        yes += a;
    }
    return yes;
}

// ---- transports -----------------------------------------------------------------

struct LmmTransport {
    virtual ~LmmTransport() = default;
    // Sends one query with one image attachment; returns the completion text.
    // Throws AnnotationError on any transport failure.
    virtual std::string ask(const std::string& query, const std::string& image_bytes) = 0;
};

// Answers from a fixed callback; handy for tests and the all_yes/all_no mocks.
class ScriptedTransport : public LmmTransport {
public:
    using Fn = std::function<std::string(const std::string& query, const std::string& image)>;
    explicit ScriptedTransport(Fn fn) : fn_(std::move(fn)) {}
    static ScriptedTransport uniform_answer(const std::string& word, int n_questions) {
        return ScriptedTransport([word, n_questions](const std::string&, const std::string&) {
            std::string out;
            for (int i = 1; i <= n_questions; ++i) {
                out += "A" + std::to_string(i) + ": " + word + "\n";
            }
            return out;
        });
    }
    std::string ask(const std::string& query, const std::string& image_bytes) override {
        if (!fn_) throw AnnotationError("scripted transport has no handler");
        return fn_(query, image_bytes);
    }

private:
    Fn fn_;
};

// ---- record/replay -----------------------------------------------------------------

// FNV-1a 64-bit checksum over the encoded image bytes; replay keys.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string checksum_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

namespace detail {

inline std::string escape_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\t') out += "\\t";
        else out.push_back(c);
    }
    return out;
}

inline std::string unescape_text(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            if (n == 'n') out.push_back('\n');
            else if (n == 't') out.push_back('\t');
            else out.push_back(n);
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace detail

// Replay table: image checksum -> recorded response text. File format is one
// record per line, "<16-hex-checksum>\t<response with \n,\t,\\ escaped>";
// '#' lines and blank lines are ignored.
class ReplayTable {
public:
    void put(const std::string& checksum, const std::string& response) { table_[checksum] = response; }

    const std::string* find(const std::string& checksum) const {
        auto it = table_.find(checksum);
        return it == table_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return table_.size(); }

    static ReplayTable load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open replay table: " + path);
        ReplayTable t;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos) throw IoError("replay table line missing tab: " + line);
            t.put(line.substr(0, tab), detail::unescape_text(line.substr(tab + 1)));
        }
        return t;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open replay table for writing: " + path);
        for (const auto& [k, v] : table_) f << k << '\t' << detail::escape_text(v) << '\n';
    }

private:
    std::map<std::string, std::string> table_;
};

// Deterministic mock transport keyed on the image checksum.
class ReplayTransport : public LmmTransport {
public:
    explicit ReplayTransport(ReplayTable table) : table_(std::move(table)) {}
    std::string ask(const std::string&, const std::string& image_bytes) override {
        const std::string key = checksum_hex(image_bytes);
        const std::string* r = table_.find(key);
        if (!r) throw AnnotationError("replay table has no response for image " + key);
        return *r;
    }
    const ReplayTable& table() const { return table_; }

private:
    ReplayTable table_;
};

}  // namespace dreamdpo
