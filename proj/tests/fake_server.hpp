#pragma once

#include <httplib.h>

#include <string>
#include <thread>

namespace dualmem::test {

/// httplib server on an ephemeral localhost port, running on its own thread.
class FakeServer {
public:
    FakeServer() = default;
    FakeServer(const FakeServer&) = delete;
    FakeServer& operator=(const FakeServer&) = delete;
    ~FakeServer() { stop(); }

    httplib::Server& server() { return svr_; }

    void start() {
        port_ = svr_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { svr_.listen_after_bind(); });
        svr_.wait_until_ready();
    }

    void stop() {
        if (thread_.joinable()) {
            svr_.stop();
            thread_.join();
        }
    }

    std::string url(const std::string& path = "") const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server svr_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace dualmem::test
