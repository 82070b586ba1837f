#include <cstdio>

int main() {
    std::puts("tpe: CLI not wired yet");
    return 1;
}
