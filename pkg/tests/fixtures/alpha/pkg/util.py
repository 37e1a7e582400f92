def helper2(n):
    return n + 1
