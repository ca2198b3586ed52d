#include "priorart/service.hpp"

#include <charconv>
#include <cstdio>
#include <optional>

#include <httplib.h>
#include <json.hpp>

namespace priorart {

namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, nlohmann::ordered_json{{"error", message}});
}

std::optional<std::size_t> parse_count(const std::string& s) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || value == 0) return std::nullopt;
    return value;
}

}  // namespace

SearchService::SearchService(const Engine& engine)
    : engine_(engine), server_(std::make_unique<httplib::Server>()) {
    server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        reply_json(res, 200,
                   nlohmann::ordered_json{{"status", "ok"}, {"spans", engine_.span_count()}});
    });

    server_->Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("q")) {
            reply_error(res, 400, "missing required parameter: q");
            return;
        }
        Query query;
        query.text = req.get_param_value("q");
        query.n_candidates = engine_.defaults().n_candidates;
        query.k_final = engine_.defaults().k_final;

        if (req.has_param("mode")) {
            const auto mode = search_mode_from(req.get_param_value("mode"));
            if (!mode) {
                reply_error(res, 400, "invalid mode: " + req.get_param_value("mode"));
                return;
            }
            query.mode = *mode;
        }
        if (req.has_param("n")) {
            const auto n = parse_count(req.get_param_value("n"));
            if (!n) {
                reply_error(res, 400, "invalid n: " + req.get_param_value("n"));
                return;
            }
            query.n_candidates = *n;
        }
        if (req.has_param("k")) {
            const auto k = parse_count(req.get_param_value("k"));
            if (!k) {
                reply_error(res, 400, "invalid k: " + req.get_param_value("k"));
                return;
            }
            query.k_final = *k;
        }
        for (auto [it, end] = req.params.equal_range("require"); it != end; ++it) {
            query.required_terms.push_back(it->second);
        }

        try {
            const auto outcome = engine_.run(query);
            char elapsed[32];
            std::snprintf(elapsed, sizeof elapsed, "%.3f", outcome.elapsed_ms);
            res.set_header("X-Elapsed-Ms", elapsed);
            reply_json(res, 200, response_to_json(query, outcome.results));
        } catch (const std::invalid_argument& e) {
            reply_error(res, 400, e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    });
}

SearchService::~SearchService() { stop(); }

bool SearchService::listen(const std::string& host, int port) {
    return server_->listen(host, port);
}

int SearchService::bind_any_port(const std::string& host) {
    return server_->bind_to_any_port(host);
}

bool SearchService::listen_after_bind() { return server_->listen_after_bind(); }

void SearchService::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

}  // namespace priorart
