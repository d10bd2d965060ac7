"""Desk-scale reproduction harness: synthetic tasks, demo orchestration, CLI."""
