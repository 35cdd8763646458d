"""revrank: personalized accommodation-review ranking.

Trains a pair of small text encoders contrastively so that a guest/stay
context is embedded close to the review text that guest wrote, then ranks
each accommodation's reviews for new contexts and scores the ranking.
"""

__version__ = "0.1.0"
