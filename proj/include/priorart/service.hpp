#pragma once

#include <memory>
#include <string>

#include "priorart/engine.hpp"

namespace httplib {
class Server;
}

namespace priorart {

/// Read-only JSON-over-HTTP front end for an opened engine.
///
///   GET /health            -> {"status":"ok","spans":N}
///   GET /search?q=...      -> search response; parameters mode, n, k and a
///                             repeatable require mirror the CLI flags
///
/// Malformed parameters answer 400 with {"error": ...}; unknown paths 404.
/// The response body for a given (index, query, parameters) is byte-identical
/// to the CLI's --json output; timing travels in the X-Elapsed-Ms header so
/// bodies stay deterministic.
class SearchService {
public:
    explicit SearchService(const Engine& engine);
    ~SearchService();

    SearchService(const SearchService&) = delete;
    SearchService& operator=(const SearchService&) = delete;

    /// Binds and serves until stop(). Returns false if the address cannot be
    /// bound.
    bool listen(const std::string& host, int port);

    /// Binds to an OS-assigned free port and returns it (-1 on failure);
    /// follow with listen_after_bind(). Intended for tests.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();

    /// Stops the server; in-flight requests complete first.
    void stop();

private:
    const Engine& engine_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace priorart
