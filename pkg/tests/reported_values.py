"""Reported differ-probabilities and G values used as regression targets."""

# Q1..Q5 for 4-bit attributes: P_diff at positions 1..4.
P_DIFF_4BIT = {
    "Q1": (0.25, 0.25, 0.25, 0.70),
    "Q2": (0.45, 0.45, 0.45, 0.45),
    "Q3": (0.50, 0.25, 0.25, 0.62),
    "Q4": (0.62, 0.25, 0.25, 0.50),
    "Q5": (0.70, 0.25, 0.25, 0.25),
}

# Q1..Q12 for 8-bit attributes: P_diff at positions 1 and 8.
P_DIFF_8BIT = {
    "Q1": (0.25, 0.70),
    "Q2": (0.40, 0.67),
    "Q3": (0.45, 0.45),
    "Q4": (0.57, 0.57),
    "Q5": (0.67, 0.40),
    "Q6": (0.73, 0.67),
    "Q7": (0.77, 0.57),
    "Q8": (0.80, 0.40),
    "Q9": (0.82, 0.25),
    "Q10": (0.84, 0.25),
    "Q11": (0.85, 0.25),
    "Q12": (0.86, 0.25),
}

# Mean G on 784-attribute, 8-bit strings.
G_MNIST = {"Q1": 1670, "Q3": 3890, "Q6": 252, "Q12": 36}
