"""Evolved tree-shaped ML pipelines and an epistatic SNP simulator."""
