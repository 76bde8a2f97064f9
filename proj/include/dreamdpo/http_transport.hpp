#pragma once

// HTTP adapter for the LMM annotator protocol. Kept out of lmm.hpp so that
// code not talking to a live endpoint does not pull in httplib.

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dreamdpo/lmm.hpp"

namespace dreamdpo {

inline std::string base64_encode(const std::string& bytes) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

// POSTs {"prompt": query, "image_b64": ...} to the endpoint and reads the
// completion from the "text" field of the JSON reply. The endpoint locator is
// "http://host:port[/path]"; the path defaults to /annotate.
class HttpTransport : public LmmTransport {
public:
    explicit HttpTransport(const std::string& locator, int timeout_seconds = 30) {
        std::string rest = locator;
        const std::string scheme = "http://";
        if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
        const std::size_t slash = rest.find('/');
        host_port_ = "http://" + (slash == std::string::npos ? rest : rest.substr(0, slash));
        path_ = slash == std::string::npos ? "/annotate" : rest.substr(slash);
        timeout_seconds_ = timeout_seconds;
    }

    std::string ask(const std::string& query, const std::string& image_bytes) override {
        httplib::Client client(host_port_);
        client.set_connection_timeout(timeout_seconds_);
        client.set_read_timeout(timeout_seconds_);
        nlohmann::json req{{"prompt", query}, {"image_b64", base64_encode(image_bytes)}};
        auto res = client.Post(path_, req.dump(), "application/json");
        if (!res) {
            throw AnnotationError("LMM endpoint unreachable: " + host_port_ + path_);
        }
        if (res->status != 200) {
            throw AnnotationError("LMM endpoint returned status " + std::to_string(res->status));
        }
        try {
            const auto body = nlohmann::json::parse(res->body);
            return body.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw AnnotationError(std::string("bad LMM endpoint reply: ") + e.what());
        }
    }

private:
    std::string host_port_;
    std::string path_;
    int timeout_seconds_ = 30;
};

}  // namespace dreamdpo
