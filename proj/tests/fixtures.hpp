#pragma once

// Scratch directories and a small trained data directory shared by the
// service, CLI and acceptance tests.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <sstream>
#include <string>

#include "flightstat/cli.hpp"

namespace fixtures {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag = "tmp") {
        static std::atomic<int> n{0};
        path = fs::temp_directory_path() /
               ("flightstat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// Synthetic ingest plus all three models; the network is kept tiny so this runs in well under a second.
inline void build_data_dir(const fs::path& dir, std::size_t records = 3000, std::uint64_t seed = 7) {
    std::ostringstream log;
    flightstat::IngestOptions in;
    in.synthetic = records;
    in.seed = seed;
    in.test_fraction = 0.1;
    in.out = dir;
    flightstat::run_ingest(in, log);

    flightstat::TrainOptions tr;
    tr.data_dir = dir;
    tr.mlp.hidden_sizes = {16};
    tr.mlp.epochs = 3;
    tr.mlp.batch_size = 64;
    flightstat::run_train(tr, log);
}

// Origin/destination codes of a pair that appears in the synthetic data.
struct Route {
    std::string origin, destination, carrier;
};

inline Route some_route(const fs::path& dir) {
    const auto records = flightstat::load_split(dir, "train");
    const auto& r = records.front();
    return {std::to_string(r.origin_airport_id), std::to_string(r.dest_airport_id), r.carrier};
}

// Asks the kernel for an unused loopback port, then releases it.
inline int free_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

}  // namespace fixtures
