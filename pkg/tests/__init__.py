# headmask test suite
