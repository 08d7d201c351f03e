"""The full loop: a scripted text stream stands in for the language model,
the trained switch decides token by token, and computed numbers are spliced
into the response with a full audit trace.

Trains small decoder and switch models first; takes a minute or two.
"""

from symcalc import PRIMITIVES, TrainConfig, build_complete, generate_with_switch
from symcalc.controller import ToyEncoder
from symcalc.datagen import sample_decoder_dataset, sample_switch_dataset
from symcalc.training import train_decoder, train_switch

spec = build_complete(list(PRIMITIVES.values()), n_inputs=2, n_layers=1)
provider = ToyEncoder()

stage1 = sample_decoder_dataset(1500, seed=100, answer_prefix=True)
stage2 = sample_decoder_dataset(3000, seed=200, answer_prefix=False)
decoder_config = TrainConfig(learning_rate=6e-4, samples_per_token=400,
                             max_steps=10 ** 9, seed=0)
decoder, _ = train_decoder(decoder_config, provider, spec,
                           [(stage1, 150), (stage2, 1850)])

switch_config = TrainConfig(learning_rate=6e-4, samples_per_token=1,
                            max_steps=2000, seed=1)
switch, _ = train_switch(switch_config, provider,
                         sample_switch_dataset(600, seed=50))
print("training done\n")

prompt = ("<|user|>\nMike had 30 video games but 6 of them weren't working. "
          "If he wanted to sell the working games for 85.53 each, how much "
          "money could he earn?\n<|assistant|>\n")
script = [
    "Mike had 30 video games. 6 weren't working, so he had 30 - 6 = ",
    "He can sell 24 games for 85.53 each. 24 x 85.53 is ",
    "So Mike could earn 2052.72 dollars.",
]
response, trace = generate_with_switch(provider, decoder, switch, spec, prompt,
                                       max_tokens=80, script=script)
print("response:")
print(response)
print("\ntrace of calculator firings:")
for step in trace.fired_steps():
    print(f"  step {step.step:>3}: {step.expression} on {step.operands} "
          f"-> {step.value} (switch score {step.switch_score:.3f})")
