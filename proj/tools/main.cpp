/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "cli.hpp"

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

int main(int argc, char **argv)
{
    // SIGINT / SIGTERM are taken by a dedicated thread so a running collector
    // shuts down cleanly; every other subcommand keeps the default action.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([set] {
        int sig = 0;
        sigwait(&set, &sig);
        vetgate::cli::request_stop();
        std::signal(sig, SIG_DFL);
        sigset_t again = set;
        pthread_sigmask(SIG_UNBLOCK, &again, nullptr);
    }).detach();

    std::vector<std::string> args(argv, argv + argc);
    return vetgate::cli::run(args, vetgate::executor::current_environment(), std::cout, std::cerr);
}
