"""SMT-LIB 2 QF_FP frontend: parser, normalization, bit-exact evaluation."""
