"""EV driver behavior modeling: session features, K-means user groups,
an MLP group classifier and Monte-Carlo day-ahead load envelopes."""

__version__ = "0.1.0"
