#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "rulexplain/simulators.hpp"

namespace rulexplain {

/// Adapter for a simulator living in another process. Each call launches
/// `/bin/sh -c <command>` and speaks the line protocol:
///
///   request:  SIM <T> <J>\n then J lines of T space-separated per-step values
///   reply:    OK <T>\n then one line of T space-separated values
///             or ERR <message>
///
/// Calls on one instance are serialized.
class ExternalSimulator final : public Simulator {
public:
    ExternalSimulator(InputSpec spec, std::string command, std::chrono::milliseconds timeout = std::chrono::seconds(120))
        : spec_(std::move(spec)), command_(std::move(command)), timeout_(timeout) {}

    const InputSpec& spec() const override { return spec_; }
    std::string name() const override { return "external(" + command_ + ")"; }

    OutputSeries simulate(const InputSeries& input) const override {
        require_spec(input);
        std::lock_guard lock(mutex_);
        return parse_reply(exchange(encode_request(input)));
    }

    std::string encode_request(const InputSeries& input) const {
        const StepMatrix x = expand(input);
        std::ostringstream os;
        os << "SIM " << spec_.horizon() << ' ' << spec_.size() << '\n';
        for (const auto& row : x) {
            for (std::size_t t = 0; t < row.size(); ++t) os << (t ? " " : "") << detail::format_double(row[t]);
            os << '\n';
        }
        return os.str();
    }

    OutputSeries parse_reply(const std::string& reply) const {
        std::istringstream in(reply);
        std::string head;
        if (!(in >> head)) throw MalformedReply("external simulator sent an empty reply");
        if (head == "ERR") {
            std::string msg;
            std::getline(in, msg);
            throw ProcessFailure("external simulator reported error:" + msg);
        }
        if (head != "OK") throw MalformedReply("external simulator reply must start with OK or ERR, got '" + head + "'");
        long declared = 0;
        if (!(in >> declared)) throw MalformedReply("OK frame lacks a length");
        std::vector<double> values;
        std::string tok;
        while (in >> tok) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw MalformedReply("non-numeric value '" + tok + "' in reply");
            }
        }
        const auto T = static_cast<std::size_t>(spec_.horizon());
        if (declared != static_cast<long>(T) || values.size() != T)
            throw LengthMismatch("external simulator returned " + std::to_string(values.size()) + " values (declared " +
                                 std::to_string(declared) + "), expected " + std::to_string(T));
        try {
            return OutputSeries(std::move(values), "Y");
        } catch (const SchemaError& e) {
            throw MalformedReply(e.what());
        }
    }

private:
    std::string exchange(const std::string& request) const {
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0) throw ProcessFailure(std::string("pipe: ") + std::strerror(errno));
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw ProcessFailure(std::string("pipe: ") + std::strerror(errno));
        }
        const pid_t pid = ::fork();
        if (pid < 0) throw ProcessFailure(std::string("fork: ") + std::strerror(errno));
        if (pid == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        int in_fd = to_child[1], out_fd = from_child[0];
        ::fcntl(in_fd, F_SETFL, ::fcntl(in_fd, F_GETFL) | O_NONBLOCK);

        // Writes to a child that already exited must not raise SIGPIPE here.
        sigset_t block, old;
        sigemptyset(&block);
        sigaddset(&block, SIGPIPE);
        pthread_sigmask(SIG_BLOCK, &block, &old);

        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        std::size_t written = 0;
        std::string reply;
        bool timed_out = false;
        char buf[4096];
        while (out_fd >= 0) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                timed_out = true;
                break;
            }
            pollfd fds[2];
            int nfds = 0;
            fds[nfds++] = {out_fd, POLLIN, 0};
            if (in_fd >= 0) fds[nfds++] = {in_fd, POLLOUT, 0};
            const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(left.count()));
            if (rc < 0 && errno == EINTR) continue;
            if (rc <= 0) {
                timed_out = rc == 0;
                break;
            }
            if (in_fd >= 0 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
                const ssize_t n = ::write(in_fd, request.data() + written, request.size() - written);
                if (n > 0) written += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN) written = request.size();
                if (written >= request.size()) {
                    ::close(in_fd);
                    in_fd = -1;
                }
            }
            if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
                const ssize_t n = ::read(out_fd, buf, sizeof buf);
                if (n > 0) reply.append(buf, static_cast<std::size_t>(n));
                else if (n == 0 || errno != EAGAIN) {
                    ::close(out_fd);
                    out_fd = -1;
                }
            }
        }
        if (in_fd >= 0) ::close(in_fd);
        if (out_fd >= 0) ::close(out_fd);

        timespec zero{0, 0};
        sigtimedwait(&block, nullptr, &zero);
        pthread_sigmask(SIG_SETMASK, &old, nullptr);

        int status = 0;
        if (timed_out) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            throw TimeoutError("external simulator exceeded " + std::to_string(timeout_.count()) + " ms");
        }
        ::waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            throw ProcessFailure("external simulator exited with status " + std::to_string(code));
        }
        return reply;
    }

    InputSpec spec_;
    std::string command_;
    std::chrono::milliseconds timeout_;
    mutable std::mutex mutex_;
};

}  // namespace rulexplain
