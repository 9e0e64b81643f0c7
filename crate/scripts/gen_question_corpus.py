#!/usr/bin/env python3
"""Generate the bundled two-class question corpus.

Each output line is a JSON record {"text": ..., "label": 0|1}: 0 for
conceptual questions (asking for explanation), 1 for coding questions (asking
for a program to be written, changed, or run). Output is deterministic for a
given seed.

    python3 scripts/gen_question_corpus.py > crates/classifier/data/questions.jsonl
"""

import json
import random
import sys

SEED = 20241207

TOPICS = [
    "binary search", "bubble sort", "insertion sort", "selection sort", "merge sort",
    "quick sort", "heap sort", "counting sort", "radix sort", "bucket sort",
    "a hash table", "a hash map", "a set", "a dictionary", "an array",
    "a dynamic array", "a linked list", "a doubly linked list", "a circular buffer",
    "a queue", "a deque", "a priority queue", "a stack", "a min-heap", "a max-heap",
    "a binary tree", "a binary search tree", "an AVL tree", "a red-black tree",
    "a B-tree", "a segment tree", "a Fenwick tree", "a trie", "a suffix array",
    "a graph", "an adjacency list", "an adjacency matrix", "breadth-first search",
    "depth-first search", "topological sort", "Dijkstra's algorithm",
    "the Bellman-Ford algorithm", "the Floyd-Warshall algorithm", "A* search",
    "Kruskal's algorithm", "Prim's algorithm", "union-find", "a minimum spanning tree",
    "dynamic programming", "memoization", "tabulation", "recursion", "backtracking",
    "greedy algorithms", "divide and conquer", "the knapsack problem",
    "the longest common subsequence", "edit distance", "the Fibonacci sequence",
    "the two-pointer technique", "a sliding window", "bit manipulation",
    "big-O notation", "time complexity", "space complexity", "amortized analysis",
    "regular expressions", "string matching", "the KMP algorithm",
    "Huffman coding", "run-length encoding", "base64 encoding", "an LRU cache",
    "an LFU cache", "a bloom filter", "consistent hashing", "a rate limiter",
    "linear regression", "logistic regression", "a decision tree", "a random forest",
    "gradient boosting", "AdaBoost", "a support vector machine", "the kernel trick",
    "k-nearest neighbors", "naive Bayes", "k-means clustering",
    "hierarchical clustering", "DBSCAN", "principal component analysis", "t-SNE",
    "cross-validation", "overfitting", "regularization", "gradient descent",
    "stochastic gradient descent", "backpropagation", "a neural network",
    "a multilayer perceptron", "a convolutional neural network",
    "a recurrent neural network", "an LSTM", "a GRU", "word embeddings",
    "attention", "a transformer", "dropout", "batch normalization",
    "the softmax function", "cross-entropy loss", "mean squared error",
    "precision and recall", "the F1 score", "a confusion matrix", "an ROC curve",
    "feature scaling", "one-hot encoding", "a train-test split",
    "a CSV file", "a JSON file", "file I/O", "exception handling",
    "a context manager", "a generator", "an iterator", "a decorator",
    "a lambda function", "list comprehensions", "closures", "classes and objects",
    "inheritance", "polymorphism", "encapsulation", "an abstract class",
    "multithreading", "multiprocessing", "async and await", "a mutex",
    "a deadlock", "a REST API", "HTTP requests", "web scraping", "HTML parsing",
    "a SQL query", "database indexing", "a unit test", "test-driven development",
    "a command-line parser", "logging", "sockets", "a Sudoku solver",
    "a calculator", "a tokenizer", "a parser", "an interpreter",
    "a bank account system", "a to-do list app", "a chat server",
    "a tic-tac-toe game", "a maze solver", "the N-queens problem",
]

TASKS = [
    "reverse a string", "check whether a string is a palindrome",
    "count word frequencies in a text file", "find the maximum subarray sum",
    "merge two sorted lists", "remove duplicates from a list",
    "find the k largest elements in an array", "validate an email address",
    "parse dates from a paragraph of text", "compute the factorial of a number",
    "generate all permutations of a list", "detect a cycle in a graph",
    "find the shortest path between two cities", "balance parentheses in an expression",
    "evaluate a postfix expression", "convert infix to postfix notation",
    "rotate a matrix by 90 degrees", "find the median of two sorted arrays",
    "group anagrams together", "compress a string using run-length encoding",
    "read a CSV file and print the average of a column",
    "predict house prices from a dataset", "classify emails as spam or not spam",
    "cluster customers by purchase history", "download a web page and extract its links",
    "sort a list of dictionaries by a key", "count the vowels in a sentence",
    "find prime numbers up to one million", "simulate a bank queue",
    "schedule tasks by priority", "solve a Sudoku puzzle", "autocomplete words from a prefix",
    "encode and decode a message", "extract phone numbers from text",
    "plot a function with matplotlib", "normalize the columns of a dataset",
    "split a dataset into training and test sets", "compute the accuracy of a classifier",
    "serialize an object to JSON", "retry a failed HTTP request",
    "track the balance of several bank accounts", "implement undo in a text editor",
    "find the longest increasing subsequence", "compute the edit distance of two words",
    "count islands in a grid", "flatten a nested list", "transpose a matrix",
    "calculate compound interest", "convert Celsius to Fahrenheit",
    "tokenize a sentence into words",
]

ASPECTS = [
    "its time complexity", "its space complexity", "its main use cases",
    "its advantages and disadvantages", "how it works internally",
    "when it should be used", "its limitations", "its history",
    "the intuition behind it", "common mistakes people make with it",
]

PAIRS = [
    ("a stack", "a queue"), ("an array", "a linked list"), ("merge sort", "quick sort"),
    ("breadth-first search", "depth-first search"), ("a process", "a thread"),
    ("memoization", "tabulation"), ("a list", "a tuple"), ("recursion", "iteration"),
    ("classification", "regression"), ("supervised learning", "unsupervised learning"),
    ("bagging", "boosting"), ("L1 regularization", "L2 regularization"),
    ("a min-heap", "a max-heap"), ("a hash table", "a binary search tree"),
    ("an LSTM", "a GRU"), ("k-means clustering", "DBSCAN"), ("TCP", "UDP"),
    ("a compiler", "an interpreter"), ("SQL", "NoSQL databases"),
    ("Dijkstra's algorithm", "the Bellman-Ford algorithm"),
    ("a singly linked list", "a doubly linked list"), ("an LRU cache", "an LFU cache"),
    ("top-down", "bottom-up dynamic programming"), ("precision", "recall"),
]

CONCEPT_TEMPLATES = [
    "What is {t}?",
    "What is {t} and why is it useful?",
    "What are the key properties of {t}?",
    "Explain {t}.",
    "Explain {t} in simple terms.",
    "Explain how {t} works.",
    "Can you explain {t} to a beginner?",
    "Describe {t}.",
    "Describe {a} of {t}.",
    "How does {t} work?",
    "Why is {t} important in computer science?",
    "Why would someone use {t}?",
    "When should I use {t}?",
    "Understand what {t} is.",
    "Understand {t} and its properties.",
    "Understand how {t} works and where it is used.",
    "Understand the idea behind {t}.",
    "Learn what {t} is.",
    "Learn about {t}.",
    "Learn about {a} of {t}.",
    "Learn how {t} works.",
    "Learn how to implement {t} in Python.",
    "Learn how to write {t} in Python.",
    "Learn the basics of {t}.",
    "Explore {a} of {t}.",
    "Explore real-world applications of {t}.",
    "Explore different ways to use {t}.",
    "Explore when {t} is a good choice.",
    "Identify the main use cases of {t}.",
    "Summarize {a} of {t}.",
    "Give an overview of {t}.",
    "Tell me about {t}.",
    "Discuss {a} of {t}.",
    "What problems does {t} solve?",
    "What is the intuition behind {t}?",
    "Define {t}.",
    "Is {t} a good fit for large inputs, and why?",
    "Walk me through the concept of {t}.",
]

COMPARE_TEMPLATES = [
    "What is the difference between {x} and {y}?",
    "Compare {x} and {y}.",
    "Compare {x} with {y} in terms of performance.",
    "How does {x} differ from {y}?",
    "Learn the differences between {x} and {y}.",
    "Understand the trade-offs between {x} and {y}.",
    "Explore when to prefer {x} over {y}.",
    "Explain the pros and cons of {x} versus {y}.",
    "Why might {x} be preferred over {y}?",
]

CODE_TOPIC_TEMPLATES = [
    "Implement {t} in Python.",
    "Implement {t} from scratch in Python.",
    "Implement {t} with unit tests.",
    "Write {t} in Python.",
    "Write a Python class for {t}.",
    "Write Python code for {t}.",
    "Write a program that uses {t}.",
    "Write test cases for {t}.",
    "Build {t} in Python.",
    "Build a small project using {t}.",
    "Create a Python module implementing {t}.",
    "Code {t} in Python.",
    "Develop {t} in Python with examples.",
    "Use {t} in a Python program.",
    "Apply {t} to a sample dataset in Python.",
    "Add logging to my implementation of {t}.",
    "Fix the bug in my implementation of {t}.",
    "Refactor my code for {t} to be more readable.",
    "Extend my implementation of {t} to handle edge cases.",
    "Show me Python code for {t}.",
    "Give me a complete Python implementation of {t}.",
    "Make a Python script that demonstrates {t}.",
]

CODE_TASK_TEMPLATES = [
    "Write a program to {k}.",
    "Write a Python function to {k}.",
    "Write a Python script to {k}.",
    "Write code to {k}.",
    "Implement a function to {k}.",
    "Implement a solution to {k} in Python.",
    "Solve a problem to {k} using Python.",
    "Solve the task: {k}.",
    "Build a tool to {k}.",
    "Build a Python program to {k}.",
    "Create a function that can {k}.",
    "Develop a script to {k}.",
    "Use Python to {k}.",
    "Use a dictionary to {k}.",
    "Apply recursion to {k}.",
    "Code a solution to {k}.",
    "Generate Python code to {k}.",
    "Program a utility to {k}.",
]

CODE_COMBO_TEMPLATES = [
    "Use {t} to {k} in Python.",
    "Apply {t} to {k}.",
    "Solve a problem to {k} using {t}.",
    "Implement {t} and use it to {k}.",
    "Write a program to {k} with {t}.",
    "Build an application that uses {t} to {k}.",
]

CONCEPT_TASK_TEMPLATES = [
    "How would you approach a problem to {k}?",
    "What is the best algorithm to {k}?",
    "Explain the idea behind a program to {k}.",
    "What data structure helps to {k}?",
    "Learn how to {k} efficiently.",
    "Understand the steps needed to {k}.",
    "Explore approaches to {k}.",
]


def capitalize(text):
    return text[0].upper() + text[1:]


def main():
    rng = random.Random(SEED)
    concept, code = set(), set()

    for t in TOPICS:
        for tpl in rng.sample(CONCEPT_TEMPLATES, 4):
            concept.add(tpl.format(t=t, a=rng.choice(ASPECTS)))
        for tpl in rng.sample(CODE_TOPIC_TEMPLATES, 3):
            code.add(tpl.format(t=t))
    for x, y in PAIRS:
        for tpl in rng.sample(COMPARE_TEMPLATES, 3):
            concept.add(tpl.format(x=x, y=y))
    for k in TASKS:
        for tpl in rng.sample(CODE_TASK_TEMPLATES, 4):
            code.add(tpl.format(k=k))
        for tpl in rng.sample(CONCEPT_TASK_TEMPLATES, 2):
            concept.add(tpl.format(k=k))
    for _ in range(160):
        tpl = rng.choice(CODE_COMBO_TEMPLATES)
        code.add(tpl.format(t=rng.choice(TOPICS), k=rng.choice(TASKS)))

    records = [(capitalize(q), 0) for q in concept] + [(capitalize(q), 1) for q in code]
    records.sort()
    rng.shuffle(records)
    out = sys.stdout
    for text, label in records:
        out.write(json.dumps({"text": text, "label": label}, ensure_ascii=False) + "\n")
    print(f"{len(concept)} conceptual, {len(code)} coding", file=sys.stderr)


if __name__ == "__main__":
    main()
