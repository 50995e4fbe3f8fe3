"""Covert communication over FTR channels with Fisher-Snedecor jamming."""
