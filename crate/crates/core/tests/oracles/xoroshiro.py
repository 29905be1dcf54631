"""Independent oracle: xoroshiro128+ reference algorithm (24/16/37) and a
hand-stepped Fibonacci LFSR, used to freeze expected values in entropy tests."""
M = (1 << 64) - 1

def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M

def xoroshiro(s0, s1, n):
    out = []
    for _ in range(n):
        out.append((s0 + s1) & M)
        s1 ^= s0
        s0, s1 = rotl(s0, 24) ^ s1 ^ ((s1 << 16) & M), rotl(s1, 37)
    return out

def lfsr(width, taps, state, n):
    states, outs = [], []
    for _ in range(n):
        outs.append(state & 1)
        fb = 0
        for t in taps:
            fb ^= (state >> (width - t)) & 1
        state = (state >> 1) | (fb << (width - 1))
        states.append(state)
    return states, outs

if __name__ == "__main__":
    print([hex(v) for v in xoroshiro(1, 2, 4)])
    s, o = lfsr(8, [8, 6, 5, 4], 1, 8)
    print([hex(v) for v in s], "".join(map(str, o)))
