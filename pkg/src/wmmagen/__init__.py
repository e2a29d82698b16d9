"""Tensor-core matmul code generation through progressive IR lowering."""
