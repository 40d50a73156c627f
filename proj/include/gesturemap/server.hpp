#pragma once

#include "gesturemap/error.hpp"
#include "gesturemap/session.hpp"

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace gmap {

/// REST/JSON front of an AnalysisSession. Errors are returned as
/// {"code", "message"} with 400 for bad input, 404 for unknown resources,
/// 409 for a cluster model that is already being updated and 500 otherwise.
class ApiServer {
public:
    explicit ApiServer(AnalysisSession& session);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds to `host`; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool serve();
    void stop();
    void wait_until_ready() const;

private:
    void install_routes();

    AnalysisSession& session_;
    std::unique_ptr<httplib::Server> http_;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

}  // namespace gmap
