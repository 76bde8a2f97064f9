#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dreamdpo/lmm.hpp"
#include "dreamdpo/mixture.hpp"
#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Pairwise preference models r(.). Synthetic variants are pure functions of
// the candidate vector; the lmm variant routes one query per candidate through
// a transport and uses the yes-count as the reward.

struct RewardSpec {
    enum class Kind { proximity, linear, mixture_likelihood, lmm };
    Kind kind = Kind::proximity;

    Vec x_ref;                            // proximity: r = -|x - x_ref|^2
    Vec direction;                        // linear:    r = <direction, x>
    std::optional<int> label;             // mixture_likelihood: label filter (absent = full mixture)
    std::vector<std::string> questions;   // lmm
    std::string endpoint;                 // lmm locator; empty = mock transport

    static RewardSpec proximity(Vec target) {
        RewardSpec s;
        s.kind = Kind::proximity;
        s.x_ref = std::move(target);
        return s;
    }
    static RewardSpec linear(Vec g) {
        RewardSpec s;
        s.kind = Kind::linear;
        s.direction = std::move(g);
        return s;
    }
    static RewardSpec mixture_likelihood(std::optional<int> label = std::nullopt) {
        RewardSpec s;
        s.kind = Kind::mixture_likelihood;
        s.label = label;
        return s;
    }
    static RewardSpec lmm(std::vector<std::string> questions, std::string endpoint = {}) {
        if (questions.empty()) throw ParameterError("lmm reward needs at least one question");
        RewardSpec s;
        s.kind = Kind::lmm;
        s.questions = std::move(questions);
        s.endpoint = std::move(endpoint);
        return s;
    }
};

// Win/lose assignment with the raw scores and their gap.
struct PairwiseVerdict {
    int win_index = 1;   // 1 or 2
    int lose_index = 2;
    double reward_win = 0.0;
    double reward_lose = 0.0;
    double s_gap = 0.0;  // reward_win - reward_lose, >= 0
};

// Encodes a candidate vector as image bytes for LMM attachments.
using ImageEncoder = std::function<std::string(const Vec&)>;

// Sends one formatted query with the encoded image, parses the reply, returns
// the yes-count. All failures surface as AnnotationError.
inline double lmm_annotate(const Vec& x, const RewardSpec& spec, LmmTransport& transport,
                           const ImageEncoder& encode) {
    if (spec.kind != RewardSpec::Kind::lmm) throw ParameterError("lmm_annotate: spec is not lmm");
    const std::string image = encode ? encode(x) : std::string();
    const std::string query = lmm_format_query(spec.questions);
    const std::string reply = transport.ask(query, image);
    try {
        return static_cast<double>(lmm_parse_response(reply, static_cast<int>(spec.questions.size())));
    } catch (const ResponseParseError& e) {
        throw AnnotationError(std::string("unparseable LMM reply: ") + e.what());
    }
}

class Ranker {
public:
    explicit Ranker(RewardSpec spec, const GaussianMixture* gmm = nullptr,
                    const NoiseSchedule* sched = nullptr, LmmTransport* transport = nullptr,
                    ImageEncoder encoder = {})
        : spec_(std::move(spec)),
          gmm_(gmm),
          sched_(sched),
          transport_(transport),
          encoder_(std::move(encoder)) {}

    virtual ~Ranker() = default;

    const RewardSpec& spec() const { return spec_; }

    virtual double reward(const Vec& x) const {
        switch (spec_.kind) {
            case RewardSpec::Kind::proximity:
                require_same_size(x, spec_.x_ref, "proximity reward");
                return -squared_distance(x, spec_.x_ref);
            case RewardSpec::Kind::linear:
                return dot(spec_.direction, x);
            case RewardSpec::Kind::mixture_likelihood:
                if (!gmm_ || !sched_) {
                    throw ParameterError("mixture_likelihood reward needs the oracle mixture");
                }
                return log_density(x, 0, *gmm_, *sched_, spec_.label);
            case RewardSpec::Kind::lmm:
                if (!transport_) throw AnnotationError("no LMM transport configured");
                return lmm_annotate(x, spec_, *transport_, encoder_);
        }
        throw ParameterError("unknown reward kind");
    }

    // Scores both candidates and assigns win/lose; ties go to the first.
    virtual PairwiseVerdict compare(const Vec& x_a, const Vec& x_b) const {
        require_same_size(x_a, x_b, "compare");
        const double ra = reward(x_a);
        const double rb = reward(x_b);
        PairwiseVerdict v;
        if (rb > ra) {
            v.win_index = 2;
            v.lose_index = 1;
            v.reward_win = rb;
            v.reward_lose = ra;
        } else {
            v.win_index = 1;
            v.lose_index = 2;
            v.reward_win = ra;
            v.reward_lose = rb;
        }
        v.s_gap = v.reward_win - v.reward_lose;
        return v;
    }

private:
    RewardSpec spec_;
    const GaussianMixture* gmm_;
    const NoiseSchedule* sched_;
    LmmTransport* transport_;
    ImageEncoder encoder_;
};

}  // namespace dreamdpo
