/*
 * Copyright (c) 2026, The slicedsm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>

#include "dsm/transport.hpp"

namespace dsm {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("bad endpoint '" + text + "', want host:port");
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  char* end = nullptr;
  long port = std::strtol(text.c_str() + colon + 1, &end, 10);
  if (*end != '\0' || port <= 0 || port > 65535) throw ConfigError("bad port in '" + text + "'");
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

bool write_all(int fd, const std::byte* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

int dial(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port = std::to_string(ep.port);
  if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

}  // namespace

HostMap parse_hosts(std::istream& in) {
  HostMap hosts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string id, ep, extra;
    if (!(ss >> id)) continue;
    if (!(ss >> ep) || (ss >> extra)) {
      throw ConfigError("hosts line " + std::to_string(lineno) + ": want 'node_id host:port'");
    }
    NodeId n = NodeId::parse(id);
    if (!hosts.emplace(n, parse_endpoint(ep)).second) {
      throw ConfigError("hosts line " + std::to_string(lineno) + ": duplicate " + id);
    }
  }
  return hosts;
}

HostMap load_hosts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open hosts file " + path);
  return parse_hosts(in);
}

std::string hosts_path(const std::string& fallback) {
  const char* env = std::getenv("DSM_HOSTS");
  return env && *env ? std::string(env) : fallback;
}

StreamTransport::StreamTransport(NodeId self, HostMap hosts) : self_(self), hosts_(std::move(hosts)) {
  if (!hosts_.contains(self_)) throw ConfigError(self_.str() + " missing from hosts map");
}

StreamTransport::~StreamTransport() { shutdown(); }

void StreamTransport::listen() {
  const Endpoint& ep = hosts_.at(self_);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ConnectError(sys_error("socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    std::string err = sys_error("listen on port " + std::to_string(ep.port));
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw ConnectError(err);
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

void StreamTransport::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lk(threads_mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    inbound_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { read_loop(fd); });
  }
}

void StreamTransport::read_loop(int fd) {
  FrameReader reader;
  std::vector<std::byte> chunk(64 * 1024);
  for (;;) {
    ssize_t n = ::recv(fd, chunk.data(), chunk.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    reader.feed(std::span<const std::byte>(chunk.data(), static_cast<std::size_t>(n)));
    try {
      while (auto m = reader.next()) push(std::move(*m));
    } catch (const FrameError&) {
      // A corrupt stream cannot be resynchronised; drop the connection.
      return;
    }
  }
}

void StreamTransport::push(Message m) {
  {
    std::lock_guard lk(inbox_mu_);
    inbox_.push_back(std::move(m));
  }
  inbox_cv_.notify_one();
}

StreamTransport::Peer& StreamTransport::peer(NodeId dst) {
  if (!hosts_.contains(dst)) throw TransportError("unknown destination " + dst.str());
  std::lock_guard lk(peers_mu_);
  auto& p = peers_[dst];
  if (!p) p = std::make_unique<Peer>();
  return *p;
}

void StreamTransport::open(NodeId dst, Peer& p) {
  auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  const Endpoint& ep = hosts_.at(dst);
  for (;;) {
    p.fd = dial(ep);
    if (p.fd >= 0) return;
    if (std::chrono::steady_clock::now() >= deadline) {
      throw ConnectError("cannot reach " + dst.str() + " at " + ep.host + ":" + std::to_string(ep.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void StreamTransport::connect(NodeId dst) {
  if (dst == self_) return;
  Peer& p = peer(dst);
  std::lock_guard lk(p.mu);
  if (p.fd < 0) open(dst, p);
}

void StreamTransport::send(NodeId dst, const Message& msg) {
  if (dst == self_) {
    if (!hosts_.contains(dst)) throw TransportError("unknown destination " + dst.str());
    push(msg);
    return;
  }
  Peer& p = peer(dst);
  Bytes frame = encode_frame(msg);
  std::lock_guard lk(p.mu);
  if (p.fd < 0) open(dst, p);
  if (!write_all(p.fd, frame.data(), frame.size())) {
    ::close(p.fd);
    p.fd = -1;
    throw TransportError(sys_error("send to " + dst.str()));
  }
}

std::optional<Message> StreamTransport::receive(std::chrono::nanoseconds timeout) {
  std::unique_lock lk(inbox_mu_);
  if (!inbox_cv_.wait_for(lk, timeout, [this] { return !inbox_.empty() || stopping_.load(); })) {
    return std::nullopt;
  }
  if (inbox_.empty()) return std::nullopt;
  Message m = std::move(inbox_.front());
  inbox_.pop_front();
  return m;
}

void StreamTransport::shutdown() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  {
    std::lock_guard lk(peers_mu_);
    for (auto& [id, p] : peers_) {
      std::lock_guard plk(p->mu);
      if (p->fd >= 0) ::close(p->fd);
      p->fd = -1;
    }
  }
  std::vector<std::thread> readers;
  {
    std::lock_guard lk(threads_mu_);
    for (int fd : inbound_fds_) ::shutdown(fd, SHUT_RDWR);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  for (int fd : inbound_fds_) ::close(fd);
  inbound_fds_.clear();
  inbox_cv_.notify_all();
}

}  // namespace dsm
